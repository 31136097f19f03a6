//! H_N = P_N V P_N in the truncated Fock basis, its eigendecomposition, and the kernel of
//! the spectral projector 1{H_N <= mu}.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{basis_values, bergman_kernel, FockParams};
use crate::potential::{DropletSpec, Potential, PotentialSpec, RadialProfile};
use crate::quadrature::{FockQuadrature, QuadratureSpec};
use crate::special::gauss_laguerre_normalized;

#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub entries: DMatrix<Complex64>,
    pub params: FockParams,
    pub potential: PotentialSpec,
    pub quadrature: QuadratureSpec,
}

impl OperatorMatrix {
    /// max |H - H*| / max |H|.
    pub fn hermiticity_defect(&self) -> f64 {
        let h = &self.entries;
        let scale = h.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
        let mut d: f64 = 0.0;
        for a in 0..h.nrows() {
            for b in 0..h.ncols() {
                d = d.max((h[(a, b)] - h[(b, a)].conj()).norm());
            }
        }
        d / scale
    }
}

pub fn assemble_hamiltonian(quad: &FockQuadrature, v: &Potential) -> OperatorMatrix {
    let entries = quad.real_matrix(&|z| v.eval(z));
    OperatorMatrix { entries, params: *quad.params(), potential: v.spec(), quadrature: *quad.spec() }
}

/// lambda_n = (1/n!) int t^n e^{-t} v(t/N) dt for n <= n_max, by Gauss-Laguerre with weight t^n e^{-t}.
pub fn radial_eigenvalues(p: &FockParams, v: &RadialProfile, n_max: usize) -> Vec<f64> {
    let nodes = (v.degree() + 2).max(8);
    (0..=n_max)
        .map(|n| {
            let (t, w) = gauss_laguerre_normalized(nodes, n as f64);
            t.iter().zip(&w).map(|(ti, wi)| wi * v.eval(ti / p.n)).sum()
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SpectralData {
    pub eigenvalues: Vec<f64>,
    /// Columns are the coefficient vectors of u_k in the basis phi_j.
    pub eigenvectors: DMatrix<Complex64>,
    pub n_mu: usize,
    pub mu: f64,
    pub delta: f64,
    pub params: FockParams,
    pub potential: PotentialSpec,
    pub quadrature: QuadratureSpec,
    /// Window indices whose gap to the next eigenvalue is below gap_floor / N.
    pub close_pairs: Vec<usize>,
}

/// Eigenvalues within this distance above a threshold count as ties.
pub fn tie_tolerance(level: f64) -> f64 {
    1e-12 * (1.0 + level.abs())
}

/// Relative gap below which window eigenvalues are flagged.
pub const GAP_FLOOR: f64 = 1e-3;

pub fn diagonalize(h: &OperatorMatrix, mu: f64, delta: f64) -> Result<SpectralData> {
    let k = h.params.k;
    let m = &h.entries;
    let scale = m.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let imag = m.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    let fail = || {
        let diag_min = (0..k).map(|i| m[(i, i)].re).fold(f64::INFINITY, f64::min);
        let diag_max = (0..k).map(|i| m[(i, i)].re).fold(f64::NEG_INFINITY, f64::max);
        Error::Eigensolver(format!("no convergence; K = {k}, max|H| = {scale:e}, diagonal range [{diag_min:e}, {diag_max:e}]"))
    };
    let (vals, vecs): (Vec<f64>, DMatrix<Complex64>) = if imag <= 1e-15 * scale {
        let re = m.map(|v| v.re);
        let e = SymmetricEigen::try_new(re, f64::EPSILON, 100 * k).ok_or_else(fail)?;
        (e.eigenvalues.iter().copied().collect(), e.eigenvectors.map(|v| Complex64::new(v, 0.0)))
    } else {
        let e = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 100 * k).ok_or_else(fail)?;
        (e.eigenvalues.iter().copied().collect(), e.eigenvectors)
    };
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
    let mut eigenvectors = DMatrix::<Complex64>::zeros(k, k);
    for (col, &i) in order.iter().enumerate() {
        let v = vecs.column(i);
        // Phase: the largest component is real positive; ties broken by lowest index.
        let mut best = 0;
        let mut bmag = -1.0;
        for j in 0..k {
            let a = v[j].norm();
            if a > bmag * (1.0 + 1e-9) {
                best = j;
                bmag = a;
            }
        }
        let ph = if bmag > 0.0 { v[best].conj() / bmag } else { Complex64::new(1.0, 0.0) };
        for j in 0..k {
            eigenvectors[(j, col)] = v[j] * ph;
        }
    }
    let n_mu = eigenvalues.iter().filter(|&&l| l <= mu + tie_tolerance(mu)).count();
    let floor = GAP_FLOOR / h.params.n;
    let close_pairs = (0..k.saturating_sub(1))
        .filter(|&i| {
            let l = eigenvalues[i];
            l > mu - delta && l <= mu + delta && eigenvalues[i + 1] - l < floor
        })
        .collect();
    Ok(SpectralData {
        eigenvalues,
        eigenvectors,
        n_mu,
        mu,
        delta,
        params: h.params,
        potential: h.potential.clone(),
        quadrature: h.quadrature,
        close_pairs,
    })
}

impl SpectralData {
    /// Indices k with lambda_k in (mu - delta, mu + delta].
    pub fn window(&self) -> std::ops::Range<usize> {
        let (a, b) = (self.mu - self.delta, self.mu + self.delta);
        let lo = self.eigenvalues.iter().take_while(|&&l| l <= a + tie_tolerance(a)).count();
        let hi = self.eigenvalues.iter().take_while(|&&l| l <= b + tie_tolerance(b)).count();
        lo..hi
    }

    /// max_k |H v_k - lambda_k v_k| / ||H||_max.
    pub fn residual(&self, h: &OperatorMatrix) -> f64 {
        let hv = &h.entries * &self.eigenvectors;
        let scale = h.entries.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
        let mut r: f64 = 0.0;
        for c in 0..self.params.k {
            let mut s = 0.0;
            for j in 0..self.params.k {
                s += (hv[(j, c)] - self.eigenvectors[(j, c)] * self.eigenvalues[c]).norm_sqr();
            }
            r = r.max(s.sqrt());
        }
        r / scale
    }

    /// max |U*U - 1|.
    pub fn unitarity_defect(&self) -> f64 {
        let g = self.eigenvectors.adjoint() * &self.eigenvectors;
        let mut d: f64 = 0.0;
        for a in 0..g.nrows() {
            for b in 0..g.ncols() {
                let want = if a == b { 1.0 } else { 0.0 };
                d = d.max((g[(a, b)] - want).norm());
            }
        }
        d
    }

    /// Columns `range` of the eigenvector matrix.
    pub fn columns(&self, range: std::ops::Range<usize>) -> DMatrix<Complex64> {
        self.eigenvectors.columns(range.start, range.len()).into_owned()
    }

    /// Weyl ratio N(mu) / (N gamma(D)).
    pub fn weyl_ratio(&self, droplet: &DropletSpec) -> f64 {
        self.n_mu as f64 / (self.params.n * droplet.area_gamma)
    }
}

/// Pipeline: truncation from the action of {V < mu + delta}, default quadrature, assembly,
/// diagonalization.
pub fn build_spectrum(v: &Potential, n: f64, mu: f64, delta: f64, action_upper: f64) -> Result<SpectralData> {
    let params = FockParams::for_action(n, action_upper, crate::fock::C_TRUNC)?;
    build_spectrum_with(v, params, QuadratureSpec::for_truncation(params.k), mu, delta)
}

pub fn build_spectrum_with(v: &Potential, params: FockParams, spec: QuadratureSpec, mu: f64, delta: f64) -> Result<SpectralData> {
    let quad = FockQuadrature::new(params, spec)?;
    let h = assemble_hamiltonian(&quad, v);
    diagonalize(&h, mu, delta)
}

/// Evaluator of eigenfunctions and of the kernel Pi_N(x, z).
#[derive(Debug)]
pub struct KernelField<'a> {
    pub spectral: &'a SpectralData,
    /// Occupied coefficient columns, row-major per eigenfunction: occ[k * K + j] = (v_k)_j.
    occ: Vec<Complex64>,
    /// Support of each occupied coefficient vector (entries beyond are below 1e-17).
    support: Vec<(usize, usize)>,
    basis_len: usize,
}

impl<'a> KernelField<'a> {
    pub fn new(sd: &'a SpectralData) -> Self {
        Self::for_range(sd, 0..sd.n_mu)
    }

    /// Kernel restricted to eigenfunctions in `range`.
    pub fn for_range(sd: &'a SpectralData, range: std::ops::Range<usize>) -> Self {
        let k = sd.params.k;
        let mut occ = Vec::with_capacity(range.len() * k);
        let mut support = Vec::with_capacity(range.len());
        let mut basis_len = 0;
        for c in range {
            let col = sd.eigenvectors.column(c);
            let lo = (0..k).find(|&j| col[j].norm() > 1e-17).unwrap_or(0);
            let hi = (0..k).rev().find(|&j| col[j].norm() > 1e-17).map_or(0, |j| j + 1);
            support.push((lo, hi.max(lo)));
            basis_len = basis_len.max(hi);
            occ.extend(col.iter());
        }
        Self { spectral: sd, occ, support, basis_len }
    }

    pub fn rank(&self) -> usize {
        self.support.len()
    }

    /// u_k(x) for every eigenfunction of the field, written into `out`.
    pub fn eigenfunctions(&self, x: Complex64, basis: &mut Vec<Complex64>, out: &mut Vec<Complex64>) {
        let k = self.spectral.params.k;
        basis_values(self.spectral.params.n, self.basis_len, x, basis);
        out.clear();
        for (c, &(lo, hi)) in self.support.iter().enumerate() {
            let col = &self.occ[c * k..(c + 1) * k];
            let mut s = Complex64::new(0.0, 0.0);
            for j in lo..hi {
                s += col[j] * basis[j];
            }
            out.push(s);
        }
    }

    /// Pi_N(x, z) = sum_k u_k(x) conj(u_k(z)).
    pub fn kernel_eval(&self, x: Complex64, z: Complex64) -> Complex64 {
        let (mut b, mut ux, mut uz) = (Vec::new(), Vec::new(), Vec::new());
        self.eigenfunctions(x, &mut b, &mut ux);
        self.eigenfunctions(z, &mut b, &mut uz);
        ux.iter().zip(&uz).map(|(a, c)| a * c.conj()).sum()
    }

    /// Pi_N(x, x).
    pub fn density(&self, x: Complex64) -> f64 {
        let (mut b, mut u) = (Vec::new(), Vec::new());
        self.eigenfunctions(x, &mut b, &mut u);
        u.iter().map(|v| v.norm_sqr()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    /// max over forbidden probes of Pi_N(x,x)/N.
    pub sup_forbidden: f64,
    /// max over bulk probes of 1 - Pi_N(x,x)/N.
    pub sup_bulk_gap: f64,
}

/// Probe points: `bulk` inside {V <= mu - delta}, `forbidden` inside {V >= mu + delta}.
#[derive(Clone, Debug, Default)]
pub struct ProbeGrid {
    pub bulk: Vec<Complex64>,
    pub forbidden: Vec<Complex64>,
}

impl ProbeGrid {
    /// Polar lattice of radii `0..=r_max` (n_r steps) and n_theta angles, classified by V.
    pub fn polar(v: &Potential, droplet: &DropletSpec, r_max: f64, n_r: usize, n_theta: usize) -> Self {
        let mut g = ProbeGrid::default();
        for i in 0..=n_r {
            let r = r_max * i as f64 / n_r as f64;
            for j in 0..n_theta {
                let z = Complex64::from_polar(r, std::f64::consts::TAU * j as f64 / n_theta as f64);
                let e = v.eval(z);
                if e <= droplet.mu - droplet.delta {
                    g.bulk.push(z);
                } else if e >= droplet.mu + droplet.delta {
                    g.forbidden.push(z);
                }
                if i == 0 {
                    break;
                }
            }
        }
        g
    }
}

pub fn decay_diagnostics(kf: &KernelField, grid: &ProbeGrid) -> DecayReport {
    let n = kf.spectral.params.n;
    let sup_forbidden = grid.forbidden.iter().map(|&x| kf.density(x) / n).fold(0.0, f64::max);
    let sup_bulk_gap = grid.bulk.iter().map(|&x| 1.0 - kf.density(x) / n).fold(0.0, f64::max);
    DecayReport { sup_forbidden, sup_bulk_gap }
}

/// max over an n_grid^4 lattice of (w, zeta) in [-window, window]^2 x [-window, window]^2 of
/// |Pi_N(x0 + w eps, x0 + zeta eps) eps^2 - P_N(x0 + w eps, x0 + zeta eps) eps^2|.
///
/// The reference P_N(.)eps^2 equals P_1(w, zeta) = exp(w conj(zeta) - |w|^2/2 - |zeta|^2/2) up
/// to a unimodular gauge factor that is 1 at x0 = 0.
pub fn universality_check(kf: &KernelField, x0: Complex64, window: f64, n_grid: usize) -> f64 {
    let p = kf.spectral.params;
    let eps = p.eps();
    let pts: Vec<Complex64> = (0..n_grid)
        .flat_map(|i| (0..n_grid).map(move |j| (i, j)))
        .map(|(i, j)| {
            let s = |m: usize| if n_grid == 1 { 0.0 } else { -window + 2.0 * window * m as f64 / (n_grid - 1) as f64 };
            Complex64::new(s(i), s(j))
        })
        .collect();
    let mut basis = Vec::new();
    let vals: Vec<Vec<Complex64>> = pts
        .iter()
        .map(|w| {
            let mut u = Vec::new();
            kf.eigenfunctions(x0 + w * eps, &mut basis, &mut u);
            u
        })
        .collect();
    let mut err: f64 = 0.0;
    for (a, ua) in pts.iter().zip(&vals) {
        for (b, ub) in pts.iter().zip(&vals) {
            let pi: Complex64 = ua.iter().zip(ub).map(|(x, y)| x * y.conj()).sum();
            let reference = bergman_kernel(&p, x0 + a * eps, x0 + b * eps);
            err = err.max(((pi - reference) * eps * eps).norm());
        }
    }
    err
}

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    format: String,
    potential: PotentialSpec,
    potential_hash: String,
    params: FockParams,
    quadrature: QuadratureSpec,
    mu: f64,
    delta: f64,
    n_mu: usize,
    close_pairs: Vec<usize>,
    layout: String,
}

const CACHE_MAGIC: &[u8; 8] = b"FDPPSD01";

/// Writes the spectral data as: magic, u64 LE header length, JSON header, then little-endian f64
/// arrays (eigenvalues; eigenvectors as interleaved re/im in column-major order).
pub fn save_spectral(sd: &SpectralData, path: &Path) -> Result<()> {
    let header = CacheHeader {
        format: "fockdpp-spectral-v1".into(),
        potential: sd.potential.clone(),
        potential_hash: sd.potential.hash(),
        params: sd.params,
        quadrature: sd.quadrature,
        mu: sd.mu,
        delta: sd.delta,
        n_mu: sd.n_mu,
        close_pairs: sd.close_pairs.clone(),
        layout: "eigenvalues f64[K]; eigenvectors (re, im) f64 pairs, column-major K x K".into(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Cache(e.to_string()))?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(CACHE_MAGIC)?;
    f.write_all(&(json.len() as u64).to_le_bytes())?;
    f.write_all(&json)?;
    for v in &sd.eigenvalues {
        f.write_all(&v.to_le_bytes())?;
    }
    for v in sd.eigenvectors.iter() {
        f.write_all(&v.re.to_le_bytes())?;
        f.write_all(&v.im.to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

/// Reads data written by [`save_spectral`]; `expected` guards against a stale cache key.
pub fn load_spectral(path: &Path, expected: Option<(&PotentialSpec, &FockParams, &QuadratureSpec)>) -> Result<SpectralData> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    let mut len = [0u8; 8];
    f.read_exact(&mut len)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    f.read_exact(&mut json)?;
    let h: CacheHeader = serde_json::from_slice(&json).map_err(|e| Error::Cache(e.to_string()))?;
    if let Some((pot, params, quad)) = expected {
        if h.potential_hash != pot.hash() || h.params != *params || h.quadrature != *quad {
            return Err(Error::Cache("cache key mismatch".into()));
        }
    }
    let k = h.params.k;
    let mut read_f64 = || -> Result<f64> {
        let mut b = [0u8; 8];
        f.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    };
    let eigenvalues = (0..k).map(|_| read_f64()).collect::<Result<Vec<_>>>()?;
    let mut data = Vec::with_capacity(k * k);
    for _ in 0..k * k {
        let re = read_f64()?;
        let im = read_f64()?;
        data.push(Complex64::new(re, im));
    }
    Ok(SpectralData {
        eigenvalues,
        eigenvectors: DMatrix::from_vec(k, k, data),
        n_mu: h.n_mu,
        mu: h.mu,
        delta: h.delta,
        params: h.params,
        potential: h.potential,
        quadrature: h.quadrature,
        close_pairs: h.close_pairs,
    })
}
