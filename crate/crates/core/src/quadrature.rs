//! Radial Gauss-Legendre x angular DFT quadrature for matrix elements <phi_a | g phi_b>.
//!
//! With t = N|z|^2 the matrix element reduces to
//! `int_0^inf psi_a(t) psi_b(t) ghat_{a-b}(sqrt(t/N)) dt`, where
//! `psi_a(t)^2 = t^a e^{-t} / a!` and `ghat_n(r)` is the n-th angular Fourier mode of g on the
//! circle of radius r.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::FockParams;
use crate::special::{gauss_legendre_interval, ln_factorial_table};

const NEGLIGIBLE: f64 = 1e-18;
const CHUNKS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    /// Gauss-Legendre nodes in t.
    pub n_r: usize,
    /// Uniform angular nodes.
    pub n_theta: usize,
    /// Upper end of the t interval.
    pub t_max: f64,
}

impl QuadratureSpec {
    /// Defaults for a truncation K.
    pub fn for_truncation(k: usize) -> Self {
        let kf = k as f64;
        let t_max = kf + 12.0 * kf.sqrt() + 60.0;
        let n_r = (2 * k + 40).max(t_max.ceil() as usize + 40);
        let n_theta = (2 * k + 16).next_power_of_two();
        Self { n_r, n_theta, t_max }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.n_r < k + 20 {
            return Err(Error::InsufficientQuadrature(format!("n_r = {} < K + 20 = {}", self.n_r, k + 20)));
        }
        if self.n_theta < 2 * k + 1 {
            return Err(Error::InsufficientQuadrature(format!("n_theta = {} < 2K + 1 = {}", self.n_theta, 2 * k + 1)));
        }
        let kf = k as f64;
        if self.t_max < kf + 6.0 * kf.sqrt() + 20.0 {
            return Err(Error::InsufficientQuadrature(format!("t_max = {} does not cover basis index {k}", self.t_max)));
        }
        Ok(())
    }
}

pub struct FockQuadrature {
    params: FockParams,
    spec: QuadratureSpec,
    radii: Vec<f64>,
    weights: Vec<f64>,
    /// psi_a(t_i), node-major: psi[i * K + a].
    psi: Vec<f64>,
    /// Half-open range of basis indices with non-negligible psi at each node.
    ranges: Vec<(usize, usize)>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FockQuadrature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FockQuadrature").field("params", &self.params).field("spec", &self.spec).finish()
    }
}

impl FockQuadrature {
    pub fn new(params: FockParams, spec: QuadratureSpec) -> Result<Self> {
        spec.validate(params.k)?;
        let k = params.k;
        let (t, w) = gauss_legendre_interval(spec.n_r, 0.0, spec.t_max);
        let lf = ln_factorial_table(k);
        let mut psi = vec![0.0; spec.n_r * k];
        let mut ranges = Vec::with_capacity(spec.n_r);
        for (i, &ti) in t.iter().enumerate() {
            let lt = ti.ln();
            let row = &mut psi[i * k..(i + 1) * k];
            let mut lo = k;
            let mut hi = 0;
            for a in 0..k {
                let v = (0.5 * (a as f64 * lt - ti - lf[a])).exp();
                row[a] = v;
                if v > NEGLIGIBLE {
                    lo = lo.min(a);
                    hi = a + 1;
                }
            }
            ranges.push(if lo < hi { (lo, hi) } else { (0, 0) });
        }
        let radii = t.iter().map(|ti| (ti / params.n).sqrt()).collect();
        let fft = FftPlanner::new().plan_fft_forward(spec.n_theta);
        Ok(Self { params, spec, radii, weights: w, psi, ranges, fft })
    }

    pub fn params(&self) -> &FockParams {
        &self.params
    }

    pub fn spec(&self) -> &QuadratureSpec {
        &self.spec
    }

    /// Angular Fourier modes ghat_n(r) = (1/n_theta) sum_m g(r e^{i theta_m}) e^{-i n theta_m},
    /// indexed modulo n_theta.
    fn angular_modes(&self, r: f64, g: &(dyn Fn(Complex64) -> Complex64 + Sync), buf: &mut Vec<Complex64>) {
        let nt = self.spec.n_theta;
        buf.clear();
        buf.extend((0..nt).map(|m| g(Complex64::from_polar(r, std::f64::consts::TAU * m as f64 / nt as f64))));
        self.fft.process(buf);
        let s = 1.0 / nt as f64;
        for v in buf.iter_mut() {
            *v *= s;
        }
    }

    fn accumulate(&self, nodes: std::ops::Range<usize>, g: &(dyn Fn(Complex64) -> Complex64 + Sync), hermitian: bool) -> Vec<Complex64> {
        let k = self.params.k;
        let nt = self.spec.n_theta;
        let mut acc = vec![Complex64::new(0.0, 0.0); k * k];
        let mut modes = Vec::with_capacity(nt);
        let mut fwd = vec![Complex64::new(0.0, 0.0); k];
        let mut bwd = vec![Complex64::new(0.0, 0.0); k];
        for i in nodes {
            let (lo, hi) = self.ranges[i];
            if lo >= hi {
                continue;
            }
            self.angular_modes(self.radii[i], g, &mut modes);
            let span = hi - lo;
            // bwd[d] = ghat_{-d}, fwd[d] = ghat_{d}
            for d in 0..span {
                bwd[d] = modes[(nt - d) % nt];
                fwd[d] = modes[d];
            }
            let row = &self.psi[i * k..(i + 1) * k];
            let w = self.weights[i];
            for a in lo..hi {
                let ca = w * row[a];
                let out = &mut acc[a * k..(a + 1) * k];
                for b in a..hi {
                    out[b] += bwd[b - a] * (ca * row[b]);
                }
                if !hermitian {
                    for b in lo..a {
                        out[b] += fwd[a - b] * (ca * row[b]);
                    }
                }
            }
        }
        acc
    }

    fn assemble(&self, g: &(dyn Fn(Complex64) -> Complex64 + Sync), hermitian: bool) -> DMatrix<Complex64> {
        let k = self.params.k;
        let n_r = self.spec.n_r;
        let chunk = n_r.div_ceil(CHUNKS);
        let parts: Vec<Vec<Complex64>> = (0..CHUNKS)
            .into_par_iter()
            .map(|c| self.accumulate(c * chunk..((c + 1) * chunk).min(n_r), g, hermitian))
            .collect();
        let mut total = vec![Complex64::new(0.0, 0.0); k * k];
        for p in &parts {
            for (t, v) in total.iter_mut().zip(p) {
                *t += v;
            }
        }
        let mut m = DMatrix::from_fn(k, k, |a, b| total[a * k + b]);
        if hermitian {
            for a in 0..k {
                m[(a, a)].im = 0.0;
                for b in 0..a {
                    m[(a, b)] = m[(b, a)].conj();
                }
            }
        }
        m
    }

    /// Hermitian K x K matrix of <phi_a | g phi_b> for real g.
    pub fn real_matrix(&self, g: &(dyn Fn(Complex64) -> f64 + Sync)) -> DMatrix<Complex64> {
        self.assemble(&|z| Complex64::new(g(z), 0.0), true)
    }

    /// General K x K matrix of <phi_a | g phi_b> for complex g.
    pub fn complex_matrix(&self, g: &(dyn Fn(Complex64) -> Complex64 + Sync)) -> DMatrix<Complex64> {
        self.assemble(g, false)
    }

    /// int h d gamma over the quadrature disk (t <= t_max).
    pub fn integrate(&self, h: &(dyn Fn(Complex64) -> f64 + Sync)) -> f64 {
        let nt = self.spec.n_theta;
        let mut total = 0.0;
        for (r, w) in self.radii.iter().zip(&self.weights) {
            let s: f64 = (0..nt)
                .map(|m| h(Complex64::from_polar(*r, std::f64::consts::TAU * m as f64 / nt as f64)))
                .sum();
            total += w * s;
        }
        total / (self.params.n * nt as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(n: f64, k: usize) -> FockQuadrature {
        let p = FockParams::new(n, k).unwrap();
        FockQuadrature::new(p, QuadratureSpec::for_truncation(k)).unwrap()
    }

    fn max_dev_from_identity(m: &DMatrix<Complex64>) -> f64 {
        let mut e: f64 = 0.0;
        for a in 0..m.nrows() {
            for b in 0..m.ncols() {
                let want = if a == b { 1.0 } else { 0.0 };
                e = e.max((m[(a, b)] - want).norm());
            }
        }
        e
    }

    #[test]
    fn gram_identity() {
        for (n, k) in [(8.0, 60), (32.0, 120), (128.0, 300)] {
            let q = quad(n, k);
            let g = q.real_matrix(&|_| 1.0);
            assert!(max_dev_from_identity(&g) < 1e-10, "N={n}: {}", max_dev_from_identity(&g));
        }
    }

    #[test]
    fn gram_identity_at_spec_floor() {
        let k = 100;
        let p = FockParams::new(40.0, k).unwrap();
        let spec = QuadratureSpec { n_r: k + 20, n_theta: 2 * k + 1, t_max: k as f64 + 12.0 * (k as f64).sqrt() + 30.0 };
        let q = FockQuadrature::new(p, spec).unwrap();
        assert!(max_dev_from_identity(&q.real_matrix(&|_| 1.0)) < 1e-10);
    }

    #[test]
    fn floors_are_enforced() {
        let p = FockParams::new(10.0, 50).unwrap();
        let bad = QuadratureSpec { n_r: 60, n_theta: 101, t_max: 200.0 };
        assert!(FockQuadrature::new(p, bad).is_err());
        let bad = QuadratureSpec { n_r: 70, n_theta: 100, t_max: 200.0 };
        assert!(FockQuadrature::new(p, bad).is_err());
    }

    #[test]
    fn shift_matrix_of_z() {
        // <phi_a | z phi_b> = sqrt((b+1)/N) for a = b + 1
        let q = quad(16.0, 50);
        let m = q.complex_matrix(&|z| z);
        for a in 0..50 {
            for b in 0..50 {
                let want = if a == b + 1 { ((b + 1) as f64 / 16.0).sqrt() } else { 0.0 };
                assert!((m[(a, b)] - want).norm() < 1e-11, "({a},{b})");
            }
        }
    }

    #[test]
    fn integrate_gaussian() {
        // int e^{-|z|^2} d gamma = 1
        let q = quad(4.0, 40);
        assert!((q.integrate(&|z| (-z.norm_sqr()).exp()) - 1.0).abs() < 1e-12);
    }
}
