//! Exact finite-N statistics of linear statistics under Pi_N and their predicted limits.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::sigma1_along_level;
use crate::fock::FockParams;
use crate::observable::{ScalarField, TestFunction};
use crate::operator::{build_spectrum, SpectralData};
use crate::potential::{droplet_integral, DropletGrid, DropletSpec, Potential};
use crate::quadrature::FockQuadrature;
use crate::special::{gauss_laguerre_normalized, gauss_legendre_interval, smoothstep, smoothstep_derivative};

/// Spectral data together with its quadrature, for repeated matrix-element tables.
#[derive(Debug)]
pub struct Workspace<'a> {
    pub spectral: &'a SpectralData,
    pub quad: FockQuadrature,
}

impl<'a> Workspace<'a> {
    pub fn new(sd: &'a SpectralData) -> Result<Self> {
        Ok(Self { spectral: sd, quad: FockQuadrature::new(sd.params, sd.quadrature)? })
    }

    pub fn occupied(&self) -> std::ops::Range<usize> {
        0..self.spectral.n_mu
    }
}

/// U_S* G U_S for a K x K matrix G in the basis phi.
pub fn project(sd: &SpectralData, g: &DMatrix<Complex64>, subset: std::ops::Range<usize>) -> DMatrix<Complex64> {
    let u = sd.columns(subset);
    let gu = g * &u;
    let mut m = u.adjoint() * gu;
    let n = m.nrows();
    for a in 0..n {
        m[(a, a)].im = 0.0;
        for b in 0..a {
            let avg = 0.5 * (m[(a, b)] + m[(b, a)].conj());
            m[(a, b)] = avg;
            m[(b, a)] = avg.conj();
        }
    }
    m
}

/// M_jk = <u_j | g u_k> for j, k in `subset`.
pub fn matrix_element_table(ws: &Workspace, g: &(dyn Fn(Complex64) -> f64 + Sync), subset: std::ops::Range<usize>) -> DMatrix<Complex64> {
    let full = ws.quad.real_matrix(g);
    project(ws.spectral, &full, subset)
}

/// E X(f) = tr(Pi f Pi).
pub fn mean_linear_statistic(ws: &Workspace, f: &dyn ScalarField) -> f64 {
    let t = matrix_element_table(ws, &|z| f.value(z), ws.occupied());
    t.diagonal().iter().map(|v| v.re).sum()
}

/// Var X(f) = sum_k <u_k|f^2 u_k> - sum_{j,k} |<u_j|f u_k>|^2.
pub fn variance_linear_statistic(ws: &Workspace, f: &dyn ScalarField) -> f64 {
    let t1 = matrix_element_table(ws, &|z| f.value(z), ws.occupied());
    let t2 = matrix_element_table(ws, &|z| f.value(z).powi(2), ws.occupied());
    variance_from_tables(&t1, &t2)
}

fn variance_from_tables(t1: &DMatrix<Complex64>, t2: &DMatrix<Complex64>) -> f64 {
    let a: f64 = t2.diagonal().iter().map(|v| v.re).sum();
    let b: f64 = t1.iter().map(|v| v.norm_sqr()).sum();
    a - b
}

/// log det of a Hermitian positive definite matrix via Cholesky.
pub fn hermitian_log_det(g: &DMatrix<Complex64>) -> Result<f64> {
    if g.nrows() == 0 {
        return Ok(0.0);
    }
    let chol = g
        .clone()
        .cholesky()
        .ok_or_else(|| Error::QuadratureFailure("Gram matrix of e^f is not positive definite".into()))?;
    let l = chol.l_dirty();
    Ok((0..g.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}

/// Upsilon(f; Pi_N) = log det <u_j|e^f u_k> - tr <u_j|f u_k> over the occupied set.
pub fn laplace_functional(ws: &Workspace, f: &dyn ScalarField) -> Result<f64> {
    upsilon_scaled(ws, f, 1.0)
}

/// Upsilon(lambda f; Pi_N).
pub fn upsilon_scaled(ws: &Workspace, f: &dyn ScalarField, lambda: f64) -> Result<f64> {
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let g = matrix_element_table(ws, &|z| (lambda * f.value(z)).exp(), ws.occupied());
    let t = matrix_element_table(ws, &|z| lambda * f.value(z), ws.occupied());
    let tr: f64 = t.diagonal().iter().map(|v| v.re).sum();
    Ok(hermitian_log_det(&g)? - tr)
}

/// Second derivative of lambda -> Upsilon(lambda f) at 0: central differences with step h and
/// h/2, combined by Richardson extrapolation.
pub fn upsilon_second_derivative(ws: &Workspace, f: &dyn ScalarField, h: f64) -> Result<f64> {
    let d = |s: f64| -> Result<f64> { Ok((upsilon_scaled(ws, f, s)? + upsilon_scaled(ws, f, -s)?) / (s * s)) };
    let d1 = d(h)?;
    let d2 = d(0.5 * h)?;
    Ok(d2 + (d2 - d1) / 3.0)
}

/// Sigma^1 and Sigma^2 = (1/2) int_D |grad f|^2 d gamma.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sigma1: f64,
    pub sigma2: f64,
}

impl Prediction {
    pub fn sigma(&self) -> f64 {
        self.sigma1 + self.sigma2
    }
}

/// (1/2) int_{V < mu} |grad f|^2 d gamma.
pub fn sigma2(v: &Potential, mu: f64, f: &dyn ScalarField, grid: &DropletGrid) -> Result<f64> {
    Ok(0.5 * droplet_integral(v, mu, grid, &|z| {
        let g = f.grad(z);
        g[0] * g[0] + g[1] * g[1]
    })?)
}

pub fn predicted_variance(v: &Potential, droplet: &DropletSpec, f: &dyn ScalarField, grid: &DropletGrid) -> Result<Prediction> {
    let (sigma1, _) = sigma1_along_level(v, droplet.mu, &|z| f.value(z), 1e-12)?;
    Ok(Prediction { sigma1, sigma2: sigma2(v, droplet.mu, f, grid)? })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub n: f64,
    pub k: usize,
    pub n_mu: usize,
    pub mean: f64,
    pub variance_exact: f64,
    pub upsilon: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub sigma_total: f64,
}

pub fn variance_report(ws: &Workspace, prediction: &Prediction, f: &dyn ScalarField) -> Result<VarianceReport> {
    let sd = ws.spectral;
    let t1 = matrix_element_table(ws, &|z| f.value(z), ws.occupied());
    let t2 = matrix_element_table(ws, &|z| f.value(z).powi(2), ws.occupied());
    let g = matrix_element_table(ws, &|z| f.value(z).exp(), ws.occupied());
    let mean: f64 = t1.diagonal().iter().map(|v| v.re).sum();
    Ok(VarianceReport {
        n: sd.params.n,
        k: sd.params.k,
        n_mu: sd.n_mu,
        mean,
        variance_exact: variance_from_tables(&t1, &t2),
        upsilon: hermitian_log_det(&g)? - mean,
        sigma1: prediction.sigma1,
        sigma2: prediction.sigma2,
        sigma_total: prediction.sigma(),
    })
}

/// Potential, droplet and the action of {V < mu + delta}: everything needed to build spectra
/// across N.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub potential: Potential,
    pub droplet: DropletSpec,
    pub action_upper: f64,
}

impl Ensemble {
    pub fn new(v: Potential, mu: f64, delta: f64, grid: &DropletGrid) -> Result<Self> {
        let droplet = DropletSpec::new(&v, mu, delta, grid)?;
        let action_upper = crate::potential::action_of_level(&v, mu + delta, grid)?;
        Ok(Self { potential: v, droplet, action_upper })
    }

    pub fn spectrum(&self, n: f64) -> Result<SpectralData> {
        build_spectrum(&self.potential, n, self.droplet.mu, self.droplet.delta, self.action_upper)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltRow {
    pub n: f64,
    pub k: usize,
    pub n_mu: usize,
    pub upsilon: f64,
    pub half_sigma: f64,
    pub defect: f64,
}

/// Upsilon(f) against Sigma/2 across N. Returns the rows and whether the defect decreases.
pub fn clt_sweep(ens: &Ensemble, f: &dyn ScalarField, prediction: &Prediction, ns: &[f64]) -> Result<(Vec<CltRow>, bool)> {
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let sd = ens.spectrum(n)?;
        let ws = Workspace::new(&sd)?;
        let upsilon = laplace_functional(&ws, f)?;
        let half_sigma = 0.5 * prediction.sigma();
        rows.push(CltRow { n, k: sd.params.k, n_mu: sd.n_mu, upsilon, half_sigma, defect: (upsilon - half_sigma).abs() });
    }
    let decreasing = rows.windows(2).all(|w| w[1].defect < w[0].defect);
    Ok((rows, decreasing))
}

/// Points of a square lattice of spacing h covering [-r, r]^2 where |f| > 0.
fn support_points(f: &dyn ScalarField, r: f64, h: f64) -> Vec<Complex64> {
    let n = (2.0 * r / h).ceil() as usize;
    let mut pts = Vec::new();
    for i in 0..=n {
        for j in 0..=n {
            let z = Complex64::new(-r + h * i as f64, -r + h * j as f64);
            if f.value(z) != 0.0 {
                pts.push(z);
            }
        }
    }
    pts
}

/// |Upsilon(f1 + f2) - Upsilon(f1) - Upsilon(f2)| for functions with separated supports.
pub fn decorrelation_defect(ws: &Workspace, v: &Potential, f1: &TestFunction, f2: &TestFunction) -> Result<f64> {
    let (mu, delta) = (ws.spectral.mu, ws.spectral.delta);
    if f2.is_zero() || f1.is_zero() {
        return Ok(0.0);
    }
    let r = match (f1.support_radius(), f2.support_radius()) {
        (Some(a), Some(b)) => a.max(b),
        _ => return Err(Error::Support("decorrelation needs compactly supported functions".into())),
    };
    let h = r / 100.0;
    let p1 = support_points(f1, r, h);
    let p2 = support_points(f2, r, h);
    if p1.iter().any(|z| v.eval(*z) > mu - 2.0 * delta) {
        return Err(Error::Support("supp f1 must lie in {V <= mu - 2 delta}".into()));
    }
    let gap = p1.iter().flat_map(|a| p2.iter().map(move |b| (a - b).norm())).fold(f64::INFINITY, f64::min);
    if gap + 2.0 * h < delta {
        return Err(Error::Support(format!("supports are {gap:.3} apart, need {delta}")));
    }
    let sum = f1.clone().plus(f2);
    Ok((laplace_functional(ws, &sum)? - laplace_functional(ws, f1)? - laplace_functional(ws, f2)?).abs())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussRow {
    pub lambda: f64,
    pub upsilon: f64,
    pub quadratic: f64,
    pub eta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussReport {
    pub sigma: f64,
    pub eta: f64,
    pub bound: f64,
    /// max over the grid of |Upsilon(lambda f) - lambda^2 Sigma / 2| - bound (violations are > 0).
    pub max_violation: f64,
    pub violations: usize,
    pub rows: Vec<GaussRow>,
}

/// Checks |Upsilon(lambda f) - lambda^2 Sigma/2| <= eta Sigma (1 + eta Sigma) on a lambda grid.
///
/// eta is the largest, over the grid, of ||(1-Q) e^{lambda f} Q (Q e^{lambda f} Q)^{-1}|| with Q the
/// occupied projection acting on L^2; its square is the top eigenvalue of
/// G1^{-1} (G2 - G1^2) G1^{-1}, G1 and G2 being the occupied tables of e^{lambda f} and e^{2 lambda f}.
pub fn gauss_bound_check(ws: &Workspace, f: &dyn ScalarField, lambdas: &[f64]) -> Result<GaussReport> {
    let occ = ws.occupied();
    let mut cache: Vec<(u64, DMatrix<Complex64>)> = Vec::new();
    let mut table = |s: f64| -> DMatrix<Complex64> {
        if let Some((_, m)) = cache.iter().find(|(k, _)| *k == s.to_bits()) {
            return m.clone();
        }
        let m = matrix_element_table(ws, &|z| (s * f.value(z)).exp(), occ.clone());
        cache.push((s.to_bits(), m.clone()));
        m
    };
    let t1 = matrix_element_table(ws, &|z| f.value(z), occ.clone());
    let t2 = matrix_element_table(ws, &|z| f.value(z).powi(2), occ.clone());
    let sigma = variance_from_tables(&t1, &t2);
    let tr_f: f64 = t1.diagonal().iter().map(|v| v.re).sum();
    let mut rows = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        if l == 0.0 || occ.is_empty() {
            rows.push(GaussRow { lambda: l, upsilon: 0.0, quadratic: 0.0, eta: 0.0 });
            continue;
        }
        let g1 = table(l);
        let g2 = table(2.0 * l);
        let upsilon = hermitian_log_det(&g1)? - l * tr_f;
        let inv = g1
            .clone()
            .cholesky()
            .ok_or_else(|| Error::QuadratureFailure("Gram matrix of e^f is not positive definite".into()))?
            .inverse();
        let d = &g2 - &g1 * &g1;
        let mut m = &inv * d * &inv;
        for a in 0..m.nrows() {
            m[(a, a)].im = 0.0;
        }
        let eig = SymmetricEigen::new(m);
        let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
        rows.push(GaussRow { lambda: l, upsilon, quadratic: 0.5 * l * l * sigma, eta: top.max(0.0).sqrt() });
    }
    let eta = rows.iter().map(|r| r.eta).fold(0.0, f64::max);
    let bound = eta * sigma * (1.0 + eta * sigma);
    let excess: Vec<f64> = rows.iter().map(|r| (r.upsilon - r.quadratic).abs() - bound).collect();
    Ok(GaussReport {
        sigma,
        eta,
        bound,
        max_violation: excess.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        violations: excess.iter().filter(|e| **e > 0.0).count(),
        rows,
    })
}

/// ||[P_N, f(./eta)]||_HS^2 from the Gaussian-displacement formula
/// (1/e^2) int int |f(x) - f(x + e Z)|^2 e^{-|Z|^2} d gamma(x) d gamma(Z), e = N^{-1/2} / eta.
pub fn commutator_hs_check(p: &FockParams, f: &TestFunction, eta: f64) -> Result<f64> {
    let r = f
        .support_radius()
        .ok_or_else(|| Error::Support("commutator check needs a compactly supported function".into()))?;
    let e = p.eps() / eta;
    let (s, ws) = gauss_laguerre_normalized(32, 0.0);
    let n_phi = 24;
    let reach = r + e * s.last().copied().unwrap_or(0.0).sqrt();
    let panels = 24;
    let (px, pw) = gauss_legendre_interval(12, 0.0, 1.0);
    let width = 2.0 * reach / panels as f64;
    let mut xs = Vec::new();
    let mut wx = Vec::new();
    for p_ in 0..panels {
        let lo = -reach + width * p_ as f64;
        for (x, w) in px.iter().zip(&pw) {
            xs.push(lo + width * x);
            wx.push(width * w);
        }
    }
    let dirs: Vec<Complex64> = (0..n_phi)
        .map(|k| Complex64::from_polar(1.0, std::f64::consts::TAU * (k as f64 + 0.5) / n_phi as f64))
        .collect();
    let mut total = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in xs.iter().enumerate() {
            let z = Complex64::new(x, y);
            let fz = f.value(z);
            let mut inner = 0.0;
            for (sk, wk) in s.iter().zip(&ws) {
                let rad = e * sk.sqrt();
                let acc: f64 = dirs.iter().map(|d| (fz - f.value(z + d * rad)).powi(2)).sum();
                inner += wk * acc / n_phi as f64;
            }
            total += wx[i] * wx[j] * inner;
        }
    }
    Ok(total / (std::f64::consts::PI * e * e))
}

/// Smooth cutoffs in the V variable: chi2 = 1 on {V <= mu - delta}, 0 on {V >= mu - delta/2};
/// chi1 = 1 on {|V - mu| <= 2 delta}, 0 on {|V - mu| >= 3 delta}; chi3 = (chi1 + chi2 - 1) on {V < mu}.
#[derive(Clone, Debug)]
pub struct Cutoffs {
    pub potential: Potential,
    pub mu: f64,
    pub delta: f64,
}

impl Cutoffs {
    pub fn new(v: &Potential, mu: f64, delta: f64) -> Self {
        Self { potential: v.clone(), mu, delta }
    }

    /// (chi, dchi/dV) for index 1 or 2.
    fn profile(&self, which: u8, e: f64) -> (f64, f64) {
        let (mu, d) = (self.mu, self.delta);
        match which {
            1 => {
                let s = (3.0 * d - (e - mu).abs()) / d;
                let sign = if e >= mu { -1.0 } else { 1.0 };
                (smoothstep(s), smoothstep_derivative(s) * sign / d)
            }
            _ => {
                let s = (e - (mu - d)) / (0.5 * d);
                (1.0 - smoothstep(s), -smoothstep_derivative(s) / (0.5 * d))
            }
        }
    }

    /// Value and gradient of chi_j at z.
    pub fn chi(&self, which: u8, z: Complex64) -> (f64, [f64; 2]) {
        let e = self.potential.eval(z);
        let gv = self.potential.grad(z);
        match which {
            1 | 2 => {
                let (c, dc) = self.profile(which, e);
                (c, [dc * gv[0], dc * gv[1]])
            }
            _ => {
                if e >= self.mu {
                    return (0.0, [0.0, 0.0]);
                }
                let (c1, d1) = self.profile(1, e);
                let (c2, d2) = self.profile(2, e);
                let dc = d1 + d2;
                (c1 + c2 - 1.0, [dc * gv[0], dc * gv[1]])
            }
        }
    }

    /// f * chi_j as a scalar field.
    pub fn localize<'a>(&'a self, f: &'a dyn ScalarField, which: u8) -> impl ScalarField + 'a {
        crate::observable::FnField {
            f: move |z: Complex64| f.value(z) * self.chi(which, z).0,
            g: move |z: Complex64| {
                let (c, gc) = self.chi(which, z);
                let gf = f.grad(z);
                let fv = f.value(z);
                [gf[0] * c + fv * gc[0], gf[1] * c + fv * gc[1]]
            },
        }
    }
}

/// |Sigma^2(f) - Sigma^2(f chi1) - Sigma^2(f chi2) + Sigma^2(f chi3)| over the droplet.
pub fn variance_additivity_check(v: &Potential, droplet: &DropletSpec, f: &dyn ScalarField, cut: &Cutoffs, grid: &DropletGrid) -> Result<f64> {
    let s = |g: &dyn ScalarField| sigma2(v, droplet.mu, g, grid);
    let full = s(f)?;
    let s1 = s(&cut.localize(f, 1))?;
    let s2 = s(&cut.localize(f, 2))?;
    let s3 = s(&cut.localize(f, 3))?;
    Ok((full - s1 - s2 + s3).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::log_basis_eval;
    use crate::observable::Atom;
    use crate::operator::{build_spectrum_with, KernelField};
    use crate::quadrature::QuadratureSpec;

    fn ginibre(n: f64) -> SpectralData {
        build_spectrum(&Potential::ginibre(), n, 1.0, 0.25, 1.25).unwrap()
    }

    fn bump(c: [f64; 2], r: f64, coef: f64) -> TestFunction {
        TestFunction::atom(coef, Atom::DiskBump { center: c, radius: r })
    }

    /// int h d gamma over [-l, l]^2 by the trapezoid rule.
    fn cartesian(l: f64, m: usize, h: impl Fn(Complex64) -> f64) -> f64 {
        let step = 2.0 * l / m as f64;
        let mut s = 0.0;
        for i in 0..=m {
            for j in 0..=m {
                let w = if i == 0 || i == m { 0.5 } else { 1.0 } * if j == 0 || j == m { 0.5 } else { 1.0 };
                s += w * h(Complex64::new(-l + step * i as f64, -l + step * j as f64));
            }
        }
        s * step * step / std::f64::consts::PI
    }

    #[test]
    fn table_examples() {
        let sd = ginibre(24.0);
        let ws = Workspace::new(&sd).unwrap();
        let one = matrix_element_table(&ws, &|_| 1.0, 0..sd.n_mu);
        let r2 = matrix_element_table(&ws, &|z| z.norm_sqr(), 0..sd.n_mu);
        let zero = matrix_element_table(&ws, &|_| 0f64.exp() - 1.0, 0..sd.n_mu);
        for a in 0..sd.n_mu {
            for b in 0..sd.n_mu {
                let id = if a == b { 1.0 } else { 0.0 };
                assert!((one[(a, b)] - id).norm() < 1e-10);
                assert!((r2[(a, b)] - id * (a + 1) as f64 / 24.0).norm() < 1e-10);
                assert_eq!(zero[(a, b)].norm(), 0.0);
            }
        }
    }

    #[test]
    fn ginibre_re_z_moments() {
        // Re(sum z_i) is the real part of the trace of a Ginibre matrix: Gaussian with variance N_mu / (2N).
        for n in [16.0, 40.0] {
            let sd = ginibre(n);
            let ws = Workspace::new(&sd).unwrap();
            let f = TestFunction::re_z();
            let var = sd.n_mu as f64 / (2.0 * n);
            assert!(mean_linear_statistic(&ws, &f).abs() < 1e-10);
            assert!((variance_linear_statistic(&ws, &f) - var).abs() < 1e-10);
            assert!((laplace_functional(&ws, &f).unwrap() - 0.5 * var).abs() < 1e-9);
        }
    }

    #[test]
    fn mean_examples() {
        let sd = build_spectrum(&Potential::anisotropic(0.3).unwrap(), 20.0, 1.0, 0.3, 1.4).unwrap();
        let ws = Workspace::new(&sd).unwrap();
        assert!((mean_linear_statistic(&ws, &TestFunction::constant(1.0)) - sd.n_mu as f64).abs() < 1e-10);
        let pos = TestFunction::atom(1.0, Atom::GaussBump { center: [0.4, 0.1], width: 0.3 });
        let m = mean_linear_statistic(&ws, &pos);
        assert!(m >= 0.0);
        let kf = KernelField::new(&sd);
        let direct = ws.quad.integrate(&|x| pos.value(x) * kf.density(x));
        assert!((m - direct).abs() <= 1e-6 * m.abs());
    }

    #[test]
    fn upsilon_examples() {
        let sd = build_spectrum(&Potential::anisotropic(0.3).unwrap(), 20.0, 1.0, 0.3, 1.4).unwrap();
        let ws = Workspace::new(&sd).unwrap();
        assert!(laplace_functional(&ws, &TestFunction::zero()).unwrap().abs() < 1e-12);
        let f = TestFunction::re_z().plus(&bump([0.2, -0.3], 0.4, 0.7));
        let u = laplace_functional(&ws, &f).unwrap();
        let shifted = laplace_functional(&ws, &f.clone().plus(&TestFunction::constant(0.8))).unwrap();
        assert!((u - shifted).abs() < 1e-10);
        assert!(variance_linear_statistic(&ws, &TestFunction::constant(3.0)).abs() < 1e-10);
    }

    #[test]
    fn single_particle_upsilon() {
        // N = 4, mu = 0.3: only phi_0 is occupied.
        let n = 4.0;
        let sd = build_spectrum(&Potential::ginibre(), n, 0.3, 0.1, 0.4).unwrap();
        assert_eq!(sd.n_mu, 1);
        let ws = Workspace::new(&sd).unwrap();
        let f = TestFunction::re_z().plus(&TestFunction::atom(0.5, Atom::ImZ2));
        let p = FockParams::new(n, 1).unwrap();
        let dens = |z: Complex64| (2.0 * log_basis_eval(&p, 0, z).0).exp();
        let e = cartesian(5.0, 800, |z| dens(z) * f.value(z).exp());
        let m = cartesian(5.0, 800, |z| dens(z) * f.value(z));
        let want = e.ln() - m;
        let got = laplace_functional(&ws, &f).unwrap();
        assert!(got >= 0.0);
        assert!((got - want).abs() < 1e-8, "{got} {want}");
    }

    #[test]
    fn variance_is_second_derivative() {
        let sd = build_spectrum(&Potential::anisotropic(0.3).unwrap(), 24.0, 1.0, 0.3, 1.4).unwrap();
        let ws = Workspace::new(&sd).unwrap();
        let f = TestFunction::re_z().plus(&bump([0.1, 0.2], 0.5, 0.6));
        let var = variance_linear_statistic(&ws, &f);
        let d2 = upsilon_second_derivative(&ws, &f, 1e-3).unwrap();
        assert!((var - d2).abs() <= 1e-5 * var, "{var} {d2}");
    }

    #[test]
    fn convexity_symmetry_scaling() {
        let sd = build_spectrum(&Potential::anisotropic(0.2).unwrap(), 12.0, 1.0, 0.3, 1.4).unwrap();
        let ws = Workspace::new(&sd).unwrap();
        let f = TestFunction::atom(1.0, Atom::ImZ).plus(&bump([-0.3, 0.0], 0.5, 1.2));
        let grid: Vec<f64> = (0..=10).map(|i| -1.0 + 0.2 * i as f64).collect();
        let u: Vec<f64> = grid.iter().map(|&l| upsilon_scaled(&ws, &f, l).unwrap()).collect();
        for w in u.windows(3) {
            assert!(w[0] + w[2] - 2.0 * w[1] >= -1e-9);
        }
        for i in 0..grid.len() {
            assert!(u[i] + u[grid.len() - 1 - i] >= -1e-9);
        }
        let v1 = variance_linear_statistic(&ws, &f);
        let v3 = variance_linear_statistic(&ws, &f.clone().scaled(-2.5));
        assert!((v3 - 6.25 * v1).abs() <= 1e-10 * v3);
    }

    #[test]
    fn ginibre_prediction() {
        let v = Potential::ginibre();
        let grid = DropletGrid::default();
        let d = DropletSpec::new(&v, 1.0, 0.25, &grid).unwrap();
        let p = predicted_variance(&v, &d, &TestFunction::re_z(), &grid).unwrap();
        assert!((p.sigma1 - 0.25).abs() < 1e-10 && (p.sigma2 - 0.5).abs() < 1e-10);
        let c = predicted_variance(&v, &d, &TestFunction::constant(2.0), &grid).unwrap();
        assert!(c.sigma1 < 1e-20 && c.sigma2 == 0.0);
        let b = bump([0.2, 0.1], 0.4, 1.0);
        let p = predicted_variance(&v, &d, &b, &grid).unwrap();
        let whole = 0.5 * cartesian(0.8, 1600, |z| {
            let g = b.grad(z);
            g[0] * g[0] + g[1] * g[1]
        });
        assert!(p.sigma1 <= 1e-10);
        assert!((p.sigma2 - whole).abs() < 1e-6 * whole, "{} {whole}", p.sigma2);
    }

    #[test]
    fn zero_function_sweep() {
        let ens = Ensemble::new(Potential::ginibre(), 1.0, 0.25, &DropletGrid::default()).unwrap();
        let pred = Prediction { sigma1: 0.0, sigma2: 0.0 };
        let (rows, _) = clt_sweep(&ens, &TestFunction::zero(), &pred, &[8.0, 16.0]).unwrap();
        assert!(rows.iter().all(|r| r.upsilon.abs() < 1e-12 && r.defect.abs() < 1e-12));
    }

    #[test]
    fn decorrelation_examples() {
        let sd = ginibre(32.0);
        let ws = Workspace::new(&sd).unwrap();
        let v = Potential::ginibre();
        let f1 = bump([-0.45, 0.0], 0.2, 1.0);
        let f2 = bump([0.45, 0.0], 0.2, 1.0);
        assert_eq!(decorrelation_defect(&ws, &v, &f1, &TestFunction::zero()).unwrap(), 0.0);
        let d = decorrelation_defect(&ws, &v, &f1, &f2).unwrap();
        assert!(d < 1e-3);
        let close = bump([0.0, 0.0], 0.2, 1.0);
        assert!(matches!(decorrelation_defect(&ws, &v, &f1, &close), Err(Error::Support(_))));
    }

    #[test]
    fn gauss_bound_examples() {
        let sd = ginibre(32.0);
        let ws = Workspace::new(&sd).unwrap();
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let r = gauss_bound_check(&ws, &bump([0.1, 0.0], 0.5, 0.5), &grid).unwrap();
        assert_eq!(r.violations, 0, "{r:?}");
        assert_eq!(r.rows[0].upsilon, 0.0);
        let c = gauss_bound_check(&ws, &TestFunction::constant(0.7), &grid).unwrap();
        assert!(c.sigma.abs() < 1e-10);
        assert!(c.rows.iter().all(|row| row.upsilon.abs() < 1e-10));
    }

    #[test]
    fn commutator_limit() {
        let f = bump([0.1, -0.2], 0.6, 1.0);
        let half_dirichlet = 0.5 * cartesian(0.9, 1600, |z| {
            let g = f.grad(z);
            g[0] * g[0] + g[1] * g[1]
        });
        let p = |n: f64| FockParams::new(n, 1).unwrap();
        let c256 = commutator_hs_check(&p(256.0), &f, 1.0).unwrap();
        assert!((c256 / half_dirichlet - 1.0).abs() < 0.05, "{c256} {half_dirichlet}");
        let c1024 = commutator_hs_check(&p(1024.0), &f, 1.0).unwrap();
        let c64 = commutator_hs_check(&p(64.0), &f, 1.0).unwrap();
        let (d64, d256, d1024) = ((c64 - half_dirichlet).abs(), (c256 - half_dirichlet).abs(), (c1024 - half_dirichlet).abs());
        assert!(d256 * 2.0 <= d64 && d1024 * 2.0 <= d256, "{d64} {d256} {d1024}");
        assert_eq!(commutator_hs_check(&p(256.0), &TestFunction::zero(), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn additivity_identity() {
        let v = Potential::anisotropic(0.3).unwrap();
        let grid = DropletGrid::default();
        let d = DropletSpec::new(&v, 1.0, 0.1, &grid).unwrap();
        let cut = Cutoffs::new(&v, 1.0, 0.1);
        let f = TestFunction::re_z().plus(&TestFunction::atom(0.4, Atom::ImZ2)).plus(&TestFunction::atom(0.3, Atom::GaussBump { center: [0.2, 0.3], width: 0.5 }));
        assert!(variance_additivity_check(&v, &d, &f, &cut, &grid).unwrap() <= 1e-8);
        assert!(variance_additivity_check(&v, &d, &TestFunction::constant(1.0), &cut, &grid).unwrap() <= 1e-12);
        // A bump deep inside: chi2 = 1, chi1 = 0 on its support.
        let deep = bump([0.0, 0.0], 0.3, 1.0);
        for z in [Complex64::new(0.0, 0.0), Complex64::new(0.2, 0.1)] {
            assert_eq!(cut.chi(2, z).0, 1.0);
            assert_eq!(cut.chi(1, z).0, 0.0);
        }
        assert!(variance_additivity_check(&v, &d, &deep, &cut, &grid).unwrap() <= 1e-12);
    }

    #[test]
    fn cutoff_gradients() {
        let v = Potential::anisotropic(0.3).unwrap();
        let cut = Cutoffs::new(&v, 1.0, 0.1);
        let h = 1e-6;
        for which in [1u8, 2, 3] {
            for k in 0..40 {
                let z = Complex64::from_polar(0.6 + 0.012 * k as f64, 0.37 * k as f64);
                if (v.eval(z) - 1.0).abs() < 1e-3 {
                    continue;
                }
                let (_, g) = cut.chi(which, z);
                let fx = (cut.chi(which, z + h).0 - cut.chi(which, z - h).0) / (2.0 * h);
                assert!((fx - g[0]).abs() < 1e-5 * (1.0 + g[0].abs()), "chi{which} at {z}");
            }
        }
    }

    #[test]
    fn quadrature_floor_is_propagated() {
        let p = FockParams::new(8.0, 30).unwrap();
        let bad = QuadratureSpec { n_r: 40, n_theta: 40, t_max: 120.0 };
        assert!(build_spectrum_with(&Potential::ginibre(), p, bad, 1.0, 0.2).is_err());
    }
}
