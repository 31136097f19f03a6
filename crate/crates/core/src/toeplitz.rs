//! Edge analysis: the window matrix A of e^f - 1, its Toeplitz comparator B built from the
//! symbol along the flow at the Fermi level, the functional Gamma, the strong Szego oracle,
//! the replacement bound and the semiclassical trace term.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{level_curve, sigma1_along_level, FlowOptions, FourierAlongFlow, LevelCurve};
use crate::observable::{ScalarField, TestFunction};
use crate::operator::SpectralData;
use crate::potential::{DropletGrid, Potential};
use crate::special::smoothstep;
use crate::statistic::{hermitian_log_det, laplace_functional, matrix_element_table, sigma2, Ensemble, Workspace};

type C = Complex64;

/// Harmonics kept in the symbols along each level.
const SYMBOL_KMAX: usize = 60;

fn flow_opts() -> FlowOptions {
    FlowOptions { samples: 4 * SYMBOL_KMAX + 16, ..FlowOptions::default() }
}

/// Window matrices in the gauge-fixed eigenbasis u_lo..u_hi.
#[derive(Clone, Debug)]
pub struct EdgeWindow {
    pub window: std::ops::Range<usize>,
    pub fermi_index: usize,
    pub n: f64,
    /// A_jk = <u_j|(e^f - 1) u_k>, j, k in the window (A vanishes outside this block).
    pub a: DMatrix<C>,
    /// B_jk = a_{j-k}(I_mu).
    pub b: DMatrix<C>,
    /// Q = N (A - a_{j-k}(level at the index midpoint of j, k)).
    pub q: DMatrix<C>,
    /// Symbol of e^f - 1 at mu.
    pub symbol_mu: FourierAlongFlow,
}

impl EdgeWindow {
    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    /// Rank of pi: occupied states inside the window.
    pub fn n_pi(&self) -> usize {
        self.fermi_index.saturating_sub(self.window.start).min(self.len())
    }
}

/// Checks f = 0 on {|V - mu| >= delta / 2} on a polar grid covering the support.
pub fn check_edge_support(v: &Potential, mu: f64, delta: f64, f: &TestFunction) -> Result<()> {
    if f.is_zero() {
        return Ok(());
    }
    let r = f.support_radius().ok_or_else(|| Error::Support("test function has no compact factor".into()))?;
    for i in 0..=240 {
        let rad = r * i as f64 / 240.0;
        for j in 0..256 {
            let z = C::from_polar(rad, std::f64::consts::TAU * j as f64 / 256.0);
            if (v.eval(z) - mu).abs() >= 0.5 * delta && f.value(z).abs() > 1e-14 {
                return Err(Error::Support(format!("f({z}) != 0 outside |V - mu| < delta/2")));
            }
        }
    }
    Ok(())
}

fn first_harmonic(curve: &LevelCurve) -> C {
    let m = curve.samples.len();
    let s: C = curve
        .samples
        .iter()
        .enumerate()
        .map(|(j, z)| z * C::from_polar(1.0, -std::f64::consts::TAU * j as f64 / m as f64))
        .sum();
    s / m as f64
}

/// Eigenvectors of the window with phases chained by arg <u_{k+1}|z u_k> = arg z_1 at the
/// midpoint level, using the exact action of z on the Fock basis.
fn gauge_fixed(sd: &SpectralData, window: std::ops::Range<usize>, z1: &[C]) -> DMatrix<C> {
    let mut w = sd.columns(window);
    let kdim = w.nrows();
    let n = sd.params.n;
    for i in 1..w.ncols() {
        let mut c = C::new(0.0, 0.0);
        for b in 0..kdim - 1 {
            c += w[(b + 1, i)].conj() * ((b + 1) as f64 / n).sqrt() * w[(b, i - 1)];
        }
        if c.norm() < 1e-8 || z1[i - 1].norm() < 1e-12 {
            continue;
        }
        let rot = C::from_polar(1.0, c.arg() - z1[i - 1].arg());
        for b in 0..kdim {
            w[(b, i)] *= rot;
        }
    }
    w
}

fn hermitize(m: &mut DMatrix<C>) {
    let n = m.nrows();
    for a in 0..n {
        m[(a, a)].im = 0.0;
        for b in 0..a {
            let avg = 0.5 * (m[(a, b)] + m[(b, a)].conj());
            m[(a, b)] = avg;
            m[(b, a)] = avg.conj();
        }
    }
}

/// Builds A, B and Q on the window (mu - delta, mu + delta].
pub fn build_edge_matrices(ws: &Workspace, v: &Potential, f: &TestFunction) -> Result<EdgeWindow> {
    check_edge_support(v, ws.spectral.mu, ws.spectral.delta, f)?;
    build_edge_matrices_for(ws, v, &|z| f.value(z).exp_m1())
}

/// Window matrices of an arbitrary real g in place of e^f - 1; no support check.
pub fn build_edge_matrices_for(ws: &Workspace, v: &Potential, g: &(dyn Fn(C) -> f64 + Sync)) -> Result<EdgeWindow> {
    let sd = ws.spectral;
    let window = sd.window();
    if window.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let (lo, w) = (window.start, window.len());
    let opts = flow_opts();

    // Levels at index midpoints s = j + k, s in 2 lo ..= 2 (hi - 1).
    let mids: Vec<f64> = (0..2 * w - 1)
        .map(|s| {
            let (j, k) = (lo + s / 2, lo + s.div_ceil(2));
            0.5 * (sd.eigenvalues[j] + sd.eigenvalues[k])
        })
        .collect();
    let symbols: Vec<(FourierAlongFlow, C)> = mids
        .par_iter()
        .map(|&lam| {
            let curve = level_curve(v, lam, &opts)?;
            Ok((crate::flow::fourier_along_flow(&curve, g, SYMBOL_KMAX)?, first_harmonic(&curve)))
        })
        .collect::<Result<_>>()?;
    let z1: Vec<C> = (0..w - 1).map(|i| symbols[2 * i + 1].1).collect();
    let curve_mu = level_curve(v, sd.mu, &opts)?;
    let symbol_mu = crate::flow::fourier_along_flow(&curve_mu, g, SYMBOL_KMAX)?;

    let u = gauge_fixed(sd, window.clone(), &z1);
    let full = ws.quad.real_matrix(g);
    let mut a = u.adjoint() * (full * &u);
    hermitize(&mut a);
    let n = sd.params.n;
    let b = DMatrix::from_fn(w, w, |j, k| symbol_mu.get(j as i64 - k as i64));
    let q = DMatrix::from_fn(w, w, |j, k| n * (a[(j, k)] - symbols[j + k].0.get(j as i64 - k as i64)));
    Ok(EdgeWindow { window, fermi_index: sd.n_mu, n, a, b, q, symbol_mu })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToeplitzDefect {
    /// max |Q_jk| (1 + |j - k|)^{kappa + 1}.
    pub c_est: f64,
    /// max |Q_jk| along each diagonal j - k = d, d >= 0.
    pub profile: Vec<f64>,
}

pub fn toeplitz_defect(ew: &EdgeWindow, kappa: f64) -> ToeplitzDefect {
    let w = ew.len();
    let mut profile = vec![0.0f64; w];
    let mut c_est: f64 = 0.0;
    for j in 0..w {
        for k in 0..w {
            let d = j.abs_diff(k);
            let q = ew.q[(j, k)].norm();
            profile[d] = profile[d].max(q);
            c_est = c_est.max(q * (1.0 + d as f64).powf(kappa + 1.0));
        }
    }
    ToeplitzDefect { c_est, profile }
}

/// Defect constant and N ||[A, B]|| restricted to the middle half of the window, away from the
/// corners where finite sections of Toeplitz matrices fail to commute.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MidWindow {
    pub c_est: f64,
    pub commutator: f64,
}

pub fn mid_window_defects(ew: &EdgeWindow, kappa: f64) -> MidWindow {
    let (l, h) = (ew.len() / 4, 3 * ew.len() / 4);
    let mut c_est: f64 = 0.0;
    for j in l..h {
        for k in l..h {
            c_est = c_est.max(ew.q[(j, k)].norm() * (1.0 + j.abs_diff(k) as f64).powf(kappa + 1.0));
        }
    }
    let comm = &ew.a * &ew.b - &ew.b * &ew.a;
    let commutator = operator_norm(&comm.view((l, l), (h - l, h - l)).into_owned());
    MidWindow { c_est, commutator }
}

fn svd_values(m: &DMatrix<C>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    m.clone().svd(false, false).singular_values.iter().copied().collect()
}

pub fn trace_norm(m: &DMatrix<C>) -> f64 {
    svd_values(m).iter().sum()
}

pub fn operator_norm(m: &DMatrix<C>) -> f64 {
    svd_values(m).iter().copied().fold(0.0, f64::max)
}

/// pi X (1 - pi) as a p x (w - p) block.
fn off_block(x: &DMatrix<C>, p: usize) -> DMatrix<C> {
    x.view((0, p), (p, x.ncols() - p)).into_owned()
}

/// The five edge quantities and the constants (eps, C) they induce.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeConditions {
    pub norm_a: f64,
    pub trace_pi_b_off: f64,
    pub commutator: f64,
    pub trace_pi_diff_off: f64,
    pub cross: f64,
}

impl EdgeConditions {
    pub fn eps(&self) -> f64 {
        self.commutator.max(self.trace_pi_diff_off).max(self.cross)
    }

    pub fn c(&self) -> f64 {
        self.trace_pi_b_off
    }
}

pub fn edge_conditions_check(ew: &EdgeWindow) -> EdgeConditions {
    conditions(&ew.a, &ew.b, ew.n_pi())
}

fn conditions(a: &DMatrix<C>, b: &DMatrix<C>, p: usize) -> EdgeConditions {
    let w = a.nrows();
    let diff = a - b;
    let comm = a * b - b * a;
    // pi B (1 - pi) embedded in the full window.
    let mut b_off = DMatrix::zeros(w, w);
    b_off.view_mut((0, p), (p, w - p)).copy_from(&off_block(b, p));
    EdgeConditions {
        norm_a: operator_norm(a),
        trace_pi_b_off: trace_norm(&off_block(b, p)),
        commutator: operator_norm(&comm),
        trace_pi_diff_off: trace_norm(&off_block(&diff, p)),
        cross: trace_norm(&(&b_off * &diff)).max(trace_norm(&(&diff * &b_off))),
    }
}

/// Eigendecomposition of a Hermitian matrix.
fn eigh(m: &DMatrix<C>) -> (Vec<f64>, DMatrix<C>) {
    if m.is_empty() {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let e = m.clone().symmetric_eigen();
    (e.eigenvalues.iter().copied().collect(), e.eigenvectors)
}

fn spectral_apply(vals: &[f64], vecs: &DMatrix<C>, h: impl Fn(f64) -> C) -> DMatrix<C> {
    let mut scaled = vecs.clone();
    for (j, &l) in vals.iter().enumerate() {
        let s = h(l);
        for i in 0..scaled.nrows() {
            scaled[(i, j)] *= s;
        }
    }
    scaled * vecs.adjoint()
}

fn log_spectrum(vals: &[f64]) -> Result<f64> {
    vals.iter().try_fold(0.0, |acc, &l| {
        if 1.0 + l <= 0.0 {
            Err(Error::NonPositive(format!("1 + M has eigenvalue {}", 1.0 + l)))
        } else {
            Ok(acc + l.ln_1p())
        }
    })
}

/// Gamma(M) = tr[log(1 + pi M pi) - pi log(1 + M) pi], pi the first `p` coordinates.
pub fn gamma_functional(m: &DMatrix<C>, p: usize) -> Result<f64> {
    let (vals, vecs) = eigh(m);
    log_spectrum(&vals)?;
    let (pvals, _) = eigh(&m.view((0, 0), (p, p)).into_owned());
    let first = log_spectrum(&pvals)?;
    let log_m = spectral_apply(&vals, &vecs, |l| C::new(l.ln_1p(), 0.0));
    let second: f64 = (0..p).map(|i| log_m[(i, i)].re).sum();
    Ok(first - second)
}

/// log(1 + x) times a quintic plateau cutoff: 1 on [lo, hi], 0 outside an interval of twice the
/// width, kept clear of x = -1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vartheta {
    pub lo: f64,
    pub hi: f64,
    pub outer_lo: f64,
    pub outer_hi: f64,
}

impl Vartheta {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo <= -1.0 || hi < lo {
            return Err(Error::InvalidParameter(format!("plateau [{lo}, {hi}] outside (-1, inf)")));
        }
        let m = 0.5 * (hi - lo).max(1e-3);
        Ok(Self { lo, hi, outer_lo: (lo - m).max(0.5 * (lo - 1.0)), outer_hi: hi + m })
    }

    /// Plateau around the range of e^f - 1 sampled on a polar grid, widened by 5%.
    pub fn for_function(f: &TestFunction, radius: f64) -> Result<Self> {
        let (mut lo, mut hi) = (0.0f64, 0.0f64);
        for i in 0..=400 {
            for j in 0..256 {
                let z = C::from_polar(radius * i as f64 / 400.0, std::f64::consts::TAU * j as f64 / 256.0);
                let g = f.value(z).exp_m1();
                lo = lo.min(g);
                hi = hi.max(g);
            }
        }
        let pad = 0.05 * (hi - lo);
        Self::new((lo - pad).max(0.5 * (lo - 1.0)), hi + pad)
    }

    pub fn cap(&self, x: f64) -> f64 {
        if x < self.lo {
            smoothstep((x - self.outer_lo) / (self.lo - self.outer_lo))
        } else if x > self.hi {
            smoothstep((self.outer_hi - x) / (self.outer_hi - self.hi))
        } else {
            1.0
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let c = self.cap(x);
        if c == 0.0 {
            0.0
        } else {
            c * x.ln_1p()
        }
    }
}

/// tr(Pi (vartheta(A) - vartheta(g)) Pi): the first trace over the occupied window states, the
/// second over every occupied state.
pub fn semiclassical_trace_term(ws: &Workspace, ew: &EdgeWindow, f: &TestFunction, vartheta: &Vartheta) -> Result<f64> {
    let p = ew.n_pi();
    let (vals, vecs) = eigh(&ew.a);
    if let Some(&bad) = vals.iter().find(|&&l| l < vartheta.lo || l > vartheta.hi) {
        return Err(Error::InvalidParameter(format!("spectrum of A reaches {bad}, outside the vartheta plateau")));
    }
    let th_a = spectral_apply(&vals, &vecs, |l| C::new(vartheta.eval(l), 0.0));
    let first: f64 = (0..p).map(|i| th_a[(i, i)].re).sum();
    let t = matrix_element_table(ws, &|z| vartheta.eval(f.value(z).exp_m1()), ws.occupied());
    let second: f64 = t.diagonal().iter().map(|v| v.re).sum();
    Ok(first - second)
}

/// U_t(X) = e^{it pi X pi} - pi e^{it X} pi.
pub fn u_t(x: &DMatrix<C>, p: usize, t: f64) -> DMatrix<C> {
    let w = x.nrows();
    let (vals, vecs) = eigh(x);
    let ex = spectral_apply(&vals, &vecs, |l| C::from_polar(1.0, t * l));
    let (pv, pvecs) = eigh(&x.view((0, 0), (p, p)).into_owned());
    let epx = spectral_apply(&pv, &pvecs, |l| C::from_polar(1.0, t * l));
    let mut u = DMatrix::identity(w, w);
    for i in 0..p {
        for j in 0..p {
            u[(i, j)] = epx[(i, j)] - ex[(i, j)];
        }
    }
    u
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplacementRow {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// ||U_t(A) - U_t(B)||_tr against eps |t| (1 + |t| + C t^2).
pub fn replacement_bound_check(a: &DMatrix<C>, b: &DMatrix<C>, p: usize, ts: &[f64], eps: f64, c: f64) -> Vec<ReplacementRow> {
    ts.iter()
        .map(|&t| {
            let lhs = trace_norm(&(u_t(a, p, t) - u_t(b, p, t)));
            let rhs = eps * t.abs() * (1.0 + t.abs() + c * t * t);
            ReplacementRow { t, lhs, rhs, holds: lhs <= rhs }
        })
        .collect()
}

/// Fourier coefficients of a Toeplitz symbol, n = -n_max..=n_max.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToeplitzSymbol {
    pub coeffs: Vec<C>,
    pub n_max: usize,
    /// min over the grid of the symbol is positive.
    pub positive: bool,
    pub imag_residue: f64,
}

impl ToeplitzSymbol {
    pub fn get(&self, n: i64) -> C {
        if n.unsigned_abs() as usize > self.n_max {
            return C::new(0.0, 0.0);
        }
        self.coeffs[(n + self.n_max as i64) as usize]
    }

    /// Symbol e^f from the coefficients f_n (index n + n_max), resolved on `grid` points.
    pub fn exp_of(f_hat: &[C], n_max: usize, grid: usize) -> Result<Self> {
        if f_hat.len() % 2 == 0 {
            return Err(Error::InvalidParameter("coefficient list must have odd length".into()));
        }
        let m = (f_hat.len() - 1) / 2;
        if grid < 2 * (m.max(n_max)) + 1 {
            return Err(Error::InvalidParameter(format!("grid of {grid} points cannot resolve the symbol")));
        }
        let mut planner = FftPlanner::new();
        let inv = planner.plan_fft_inverse(grid);
        let fwd = planner.plan_fft_forward(grid);
        let mut buf = vec![C::new(0.0, 0.0); grid];
        for (i, c) in f_hat.iter().enumerate() {
            let n = i as i64 - m as i64;
            buf[n.rem_euclid(grid as i64) as usize] += c;
        }
        inv.process(&mut buf);
        let imag_residue = buf.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
        if imag_residue > 1e-12 {
            return Err(Error::InvalidParameter(format!("log symbol is not real (|Im| = {imag_residue:e})")));
        }
        let mut min_sym = f64::INFINITY;
        for v in buf.iter_mut() {
            let e = v.re.exp();
            min_sym = min_sym.min(e);
            *v = C::new(e, 0.0);
        }
        fwd.process(&mut buf);
        let coeffs = (-(n_max as i64)..=n_max as i64)
            .map(|n| buf[n.rem_euclid(grid as i64) as usize] / grid as f64)
            .collect();
        Ok(Self { coeffs, n_max, positive: min_sym > 0.0, imag_residue })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SzegoResult {
    pub logdet: f64,
    pub first_order: f64,
    pub szego_constant: f64,
    /// sum_{k >= 1} k |f_k|^2.
    pub predicted: f64,
}

/// log det T_n(e^f) from the coefficients f_n (index n + m for a list of length 2m + 1).
pub fn szego_asymptotics(f_hat: &[C], n: usize) -> Result<SzegoResult> {
    let m = f_hat.len().saturating_sub(1) / 2;
    let grid = (4 * n).max(16 * m).max(64).next_power_of_two();
    let sym = ToeplitzSymbol::exp_of(f_hat, n.saturating_sub(1), grid)?;
    if !sym.positive {
        return Err(Error::NonPositive("symbol e^f is not positive".into()));
    }
    let t = DMatrix::from_fn(n, n, |j, k| sym.get(j as i64 - k as i64));
    let logdet = hermitian_log_det(&t)?;
    let f0 = if f_hat.is_empty() { 0.0 } else { f_hat[m].re };
    let first_order = n as f64 * f0;
    let predicted = (1..=m).map(|k| k as f64 * f_hat[m + k].norm_sqr()).sum();
    Ok(SzegoResult { logdet, first_order, szego_constant: logdet - first_order, predicted })
}

/// Gamma of the window matrix with its predicted limit, the trace term with its predicted
/// limit, and Upsilon(f) for the assembly Gamma + trace term = Upsilon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeClt {
    pub gamma: f64,
    pub half_sigma1: f64,
    pub trace_term: f64,
    /// (1/8) int_D |grad f|^2 d gamma.
    pub trace_predicted: f64,
    pub upsilon: f64,
    pub assembly_defect: f64,
}

pub fn edge_clt(ws: &Workspace, v: &Potential, ew: &EdgeWindow, f: &TestFunction, grid: &DropletGrid) -> Result<EdgeClt> {
    let sd = ws.spectral;
    let gamma = gamma_functional(&ew.a, ew.n_pi())?;
    let radius = f.support_radius().unwrap_or(0.0);
    let vt = Vartheta::for_function(f, radius)?;
    let trace_term = semiclassical_trace_term(ws, ew, f, &vt)?;
    let upsilon = laplace_functional(ws, f)?;
    let (s1, _) = sigma1_along_level(v, sd.mu, &|z| f.value(z), 1e-14)?;
    let trace_predicted = 0.25 * sigma2(v, sd.mu, f, grid)?;
    Ok(EdgeClt {
        gamma,
        half_sigma1: 0.5 * s1,
        trace_term,
        trace_predicted,
        upsilon,
        assembly_defect: gamma + trace_term - upsilon,
    })
}

/// One N of an edge sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeRow {
    pub n: f64,
    pub window: usize,
    pub n_pi: usize,
    pub conditions: EdgeConditions,
    pub defect_c: f64,
    pub replacement: Vec<ReplacementRow>,
    pub clt: EdgeClt,
}

pub fn edge_sweep(ens: &Ensemble, f: &TestFunction, ns: &[f64], ts: &[f64], kappa: f64, grid: &DropletGrid) -> Result<Vec<EdgeRow>> {
    ns.par_iter()
        .map(|&n| {
            let sd = ens.spectrum(n)?;
            let ws = Workspace::new(&sd)?;
            let ew = build_edge_matrices(&ws, &ens.potential, f)?;
            let cond = edge_conditions_check(&ew);
            let replacement = replacement_bound_check(&ew.a, &ew.b, ew.n_pi(), ts, cond.eps(), cond.c());
            Ok(EdgeRow {
                n,
                window: ew.len(),
                n_pi: ew.n_pi(),
                defect_c: toeplitz_defect(&ew, kappa).c_est,
                replacement,
                clt: edge_clt(&ws, &ens.potential, &ew, f, grid)?,
                conditions: cond,
            })
        })
        .collect()
}

/// Header and rows of the edge sweep table.
pub fn edge_csv(rows: &[EdgeRow]) -> String {
    let mut s = String::from("n,norm_a,trace_pi_b_off,commutator,trace_pi_diff_off,cross,defect_c,gamma,half_sigma1,trace_term,trace_predicted,upsilon,assembly_defect\n");
    for r in rows {
        let c = &r.conditions;
        let vals = [
            r.n,
            c.norm_a,
            c.trace_pi_b_off,
            c.commutator,
            c.trace_pi_diff_off,
            c.cross,
            r.defect_c,
            r.clt.gamma,
            r.clt.half_sigma1,
            r.clt.trace_term,
            r.clt.trace_predicted,
            r.clt.upsilon,
            r.clt.assembly_defect,
        ];
        let line: Vec<String> = vals.iter().map(|v| format!("{v:.16e}")).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observable::Atom;
    use crate::operator::build_spectrum;
    use proptest::prelude::*;

    fn ginibre_edge_f(c: f64) -> TestFunction {
        TestFunction::product(c, vec![Atom::ReZ, Atom::RadialBump { radius: 1.0, width: 0.2 }])
    }

    fn random_hermitian(w: usize, seed: &[f64]) -> DMatrix<C> {
        let mut m = DMatrix::from_fn(w, w, |j, k| C::new(seed[(j * w + k) % seed.len()], seed[(3 * j + 7 * k + 1) % seed.len()]));
        m = (&m + m.adjoint()) * C::new(0.25, 0.0);
        m
    }

    #[test]
    fn zero_function_window() {
        let sd = build_spectrum(&Potential::ginibre(), 24.0, 1.0, 0.9, 1.9).unwrap();
        let ws = Workspace::new(&sd).unwrap();
        let ew = build_edge_matrices(&ws, &Potential::ginibre(), &TestFunction::zero()).unwrap();
        assert!(ew.a.iter().chain(ew.b.iter()).chain(ew.q.iter()).all(|v| v.norm() == 0.0));
        assert_eq!(toeplitz_defect(&ew, 2.0).c_est, 0.0);
        let c = edge_conditions_check(&ew);
        assert_eq!([c.norm_a, c.trace_pi_b_off, c.commutator, c.trace_pi_diff_off, c.cross], [0.0; 5]);
        let vt = Vartheta::new(-0.1, 0.1).unwrap();
        assert_eq!(semiclassical_trace_term(&ws, &ew, &TestFunction::zero(), &vt).unwrap(), 0.0);
        let clt = edge_clt(&ws, &Potential::ginibre(), &ew, &TestFunction::zero(), &DropletGrid::default()).unwrap();
        assert_eq!([clt.gamma, clt.trace_term, clt.half_sigma1, clt.trace_predicted], [0.0; 4]);
        assert!(clt.upsilon.abs() < 1e-12);
    }

    #[test]
    fn radial_symmetry() {
        let v = Potential::ginibre();
        let sd = build_spectrum(&v, 32.0, 1.0, 0.9, 1.9).unwrap();
        let ws = Workspace::new(&sd).unwrap();
        let f = TestFunction::atom(0.4, Atom::RadialBump { radius: 1.0, width: 0.2 });
        let ew = build_edge_matrices(&ws, &v, &f).unwrap();
        for j in 0..ew.len() {
            for k in 0..ew.len() {
                if j != k {
                    assert!(ew.a[(j, k)].norm() < 1e-12 && ew.b[(j, k)].norm() < 1e-12 && ew.q[(j, k)].norm() < 1e-10);
                }
            }
            assert!((ew.b[(j, j)] - ew.symbol_mu.get(0)).norm() == 0.0);
        }
    }

    #[test]
    fn window_errors() {
        let v = Potential::ginibre();
        let sd = build_spectrum(&v, 8.0, 0.3, 0.01, 0.4).unwrap();
        let ws = Workspace::new(&sd).unwrap();
        let f = TestFunction::atom(0.1, Atom::RadialBump { radius: 0.55, width: 0.001 });
        assert!(matches!(build_edge_matrices(&ws, &v, &f), Err(Error::EmptyWindow)));
        let sd = build_spectrum(&v, 16.0, 1.0, 0.2, 1.2).unwrap();
        let ws = Workspace::new(&sd).unwrap();
        assert!(matches!(build_edge_matrices(&ws, &v, &ginibre_edge_f(0.3)), Err(Error::Support(_))));
        assert!(matches!(build_edge_matrices(&ws, &v, &TestFunction::re_z()), Err(Error::Support(_))));
    }

    #[test]
    fn approximate_toeplitz_mid_window() {
        let v = Potential::anisotropic(0.5).unwrap();
        let ens = Ensemble::new(v.clone(), 1.0, 0.5, &DropletGrid::default()).unwrap();
        let g = |z: C| (0.2 * z.re).exp_m1();
        let mut rows = Vec::new();
        for n in [32.0, 64.0, 128.0] {
            let sd = ens.spectrum(n).unwrap();
            let ws = Workspace::new(&sd).unwrap();
            let ew = build_edge_matrices_for(&ws, &v, &g).unwrap();
            rows.push(mid_window_defects(&ew, 2.0));
        }
        let (c0, m0) = (rows[0].c_est, rows[0].commutator * 32.0);
        for (r, n) in rows.iter().zip([32.0, 64.0, 128.0]) {
            assert!(r.c_est <= 1.25 * c0, "{rows:?}");
            assert!(r.commutator * n <= 1.25 * m0, "{rows:?}");
        }
    }

    #[test]
    fn gamma_examples() {
        let m = DMatrix::<C>::zeros(6, 6);
        assert_eq!(gamma_functional(&m, 3).unwrap(), 0.0);
        let seed: Vec<f64> = (0..50).map(|i| ((i * 37 % 17) as f64 - 8.0) / 20.0).collect();
        let mut block = random_hermitian(6, &seed);
        for j in 0..3 {
            for k in 3..6 {
                block[(j, k)] = C::new(0.0, 0.0);
                block[(k, j)] = C::new(0.0, 0.0);
            }
        }
        assert!(gamma_functional(&block, 3).unwrap().abs() < 1e-12);
        let bad = DMatrix::from_diagonal_element(3, 3, C::new(-1.5, 0.0));
        assert!(matches!(gamma_functional(&bad, 1), Err(Error::NonPositive(_))));
    }

    #[test]
    fn gamma_of_toeplitz_is_half_szego() {
        let c = 0.5;
        let f_hat = [C::new(0.5 * c, 0.0), C::new(0.0, 0.0), C::new(0.5 * c, 0.0)];
        let sym = ToeplitzSymbol::exp_of(&f_hat, 200, 1024).unwrap();
        let w = 200;
        let b = DMatrix::from_fn(w, w, |j, k| {
            let v = sym.get(j as i64 - k as i64);
            if j == k {
                v - 1.0
            } else {
                v
            }
        });
        let gamma = gamma_functional(&b, w / 2).unwrap();
        let sz = szego_asymptotics(&f_hat, 256).unwrap();
        assert!((gamma - 0.5 * sz.szego_constant).abs() < 1e-10, "{gamma} {}", sz.szego_constant);
    }

    #[test]
    fn szego_examples() {
        let zero = szego_asymptotics(&[C::new(0.0, 0.0)], 64).unwrap();
        assert_eq!((zero.logdet, zero.first_order, zero.szego_constant), (0.0, 0.0, 0.0));
        let cos = [C::new(0.5, 0.0), C::new(0.0, 0.0), C::new(0.5, 0.0)];
        let a = szego_asymptotics(&cos, 256).unwrap();
        let b = szego_asymptotics(&cos, 512).unwrap();
        assert!((a.szego_constant - 0.25).abs() < 1e-8 && (a.szego_constant - b.szego_constant).abs() < 1e-10);
        assert_eq!(a.predicted, 0.25);
        let c = 0.3;
        let two = [C::new(c, 0.0), C::new(0.0, 0.0), C::new(c, 0.0)];
        assert!((szego_asymptotics(&two, 256).unwrap().szego_constant - c * c).abs() < 1e-10);
        let complex_f = [C::new(0.2, 0.1), C::new(0.0, 0.0), C::new(0.2, 0.1)];
        assert!(szego_asymptotics(&complex_f, 16).is_err());
    }

    #[test]
    fn szego_defect_decreases() {
        // f_k = 0.8^k / k, a symbol analytic in a thin annulus
        let m = 120;
        let f_hat: Vec<C> = (-(m as i64)..=m as i64)
            .map(|k| if k == 0 { C::new(0.0, 0.0) } else { C::new(0.8f64.powi(k.abs() as i32) / k.abs() as f64, 0.0) })
            .collect();
        let mut last = f64::INFINITY;
        for n in [8, 16, 32, 64] {
            let r = szego_asymptotics(&f_hat, n).unwrap();
            let d = (r.szego_constant - r.predicted).abs();
            assert!(d <= last + 1e-12, "n = {n}: {d} > {last}");
            last = d;
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn replacement_trivial_cases() {
        let seed: Vec<f64> = (0..64).map(|i| ((i * 29 % 23) as f64 - 11.0) / 30.0).collect();
        let a = random_hermitian(8, &seed);
        let rows = replacement_bound_check(&a, &a, 4, &[0.5, 1.0, 2.0], 0.0, 0.0);
        assert!(rows.iter().all(|r| r.lhs < 1e-13));
        let b = random_hermitian(8, &seed[3..]);
        let r0 = replacement_bound_check(&a, &b, 4, &[0.0], 0.1, 0.1);
        assert!(r0[0].lhs < 1e-13);
    }

    #[test]
    fn replacement_bound_anisotropic() {
        let t = 0.5;
        let v = Potential::anisotropic(t).unwrap();
        let sd = build_spectrum(&v, 64.0, 1.0, 0.95, 1.95 / (1.0f64 - t * t).sqrt()).unwrap();
        let ws = Workspace::new(&sd).unwrap();
        let f = TestFunction::product(0.2, vec![Atom::ReZ, Atom::QuadBump { a: 1.0 + t, b: 0.0, c: 1.0 - t, level: 1.0, width: 0.45 }]);
        let ew = build_edge_matrices(&ws, &v, &f).unwrap();
        let cond = edge_conditions_check(&ew);
        let rows = replacement_bound_check(&ew.a, &ew.b, ew.n_pi(), &[0.5, 1.0, 2.0], cond.eps(), cond.c());
        assert!(rows.iter().all(|r| r.holds && r.lhs > 0.0), "{rows:?}");
    }

    #[test]
    fn ginibre_edge_clt_sweep() {
        let grid = DropletGrid::default();
        let ens = Ensemble::new(Potential::ginibre(), 1.0, 0.9, &grid).unwrap();
        let f = ginibre_edge_f(0.3);
        let rows = edge_sweep(&ens, &f, &[32.0, 64.0, 128.0], &[1.0], 2.0, &grid).unwrap();
        for w in rows.windows(2) {
            let g = |r: &EdgeRow| (r.clt.gamma - r.clt.half_sigma1).abs();
            let tr = |r: &EdgeRow| (r.clt.trace_term - r.clt.trace_predicted).abs();
            assert!(g(&w[1]) < g(&w[0]) && tr(&w[1]) < tr(&w[0]), "{rows:?}");
        }
        for r in &rows[1..] {
            assert!(r.clt.assembly_defect.abs() <= 1e-6);
        }
        // Sigma^1 of 0.3 Re z on the unit circle: f_1 = 0.15.
        assert!((rows[0].clt.half_sigma1 - 0.5 * 0.15 * 0.15).abs() < 1e-12);
        let csv = edge_csv(&rows);
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn trace_prediction_scales_quadratically() {
        let grid = DropletGrid::default();
        let v = Potential::ginibre();
        let a = sigma2(&v, 1.0, &ginibre_edge_f(0.3), &grid).unwrap();
        let b = sigma2(&v, 1.0, &ginibre_edge_f(0.3 * 1.7), &grid).unwrap();
        assert!((b - 1.7 * 1.7 * a).abs() <= 1e-3 * b);
    }

    #[test]
    fn vartheta_plateau() {
        let vt = Vartheta::new(-0.3, 0.5).unwrap();
        for x in [-0.3, 0.0, 0.2, 0.5] {
            assert_eq!(vt.eval(x), x.ln_1p());
        }
        assert_eq!(vt.eval(vt.outer_hi + 0.01), 0.0);
        assert_eq!(vt.eval(vt.outer_lo - 0.01), 0.0);
        assert!(vt.outer_lo > -1.0);
        assert!(Vartheta::new(-1.0, 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn gamma_nonnegative(seed in proptest::collection::vec(-0.4f64..0.4, 64), p in 1usize..7) {
            let m = random_hermitian(8, &seed);
            prop_assert!(gamma_functional(&m, p).unwrap() >= -1e-10);
        }

        #[test]
        fn u_t_bounded(seed in proptest::collection::vec(-2.0f64..2.0, 36), p in 0usize..7, t in -5.0f64..5.0) {
            let m = random_hermitian(6, &seed);
            prop_assert!(operator_norm(&u_t(&m, p, t)) <= 2.0 + 1e-12);
        }
    }
}
