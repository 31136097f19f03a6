//! Fock-Bargmann basis phi_k(z) = z^k e^{-N|z|^2/2} sqrt(N^{k+1}/k!) and the Bergman kernel.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{ln_gamma, poisson_upper_tail};

/// Default ratio between the truncation K and the Weyl count N * I.
pub const C_TRUNC: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FockParams {
    /// Scale parameter N >= 1.
    pub n: f64,
    /// Number of basis functions phi_0..phi_{K-1}.
    pub k: usize,
}

impl FockParams {
    pub fn new(n: f64, k: usize) -> Result<Self> {
        if !(n >= 1.0) || k == 0 {
            return Err(Error::InvalidParameter(format!("need N >= 1 and K >= 1, got N = {n}, K = {k}")));
        }
        Ok(Self { n, k })
    }

    /// Truncation covering {V <= mu + delta}, whose gamma-measure is `action`.
    pub fn for_action(n: f64, action: f64, c_trunc: f64) -> Result<Self> {
        let c_trunc = c_trunc.max(1.5);
        let weyl = n * action.max(0.0);
        let k = (c_trunc * weyl).ceil().max((weyl + 10.0 * weyl.sqrt() + 20.0).ceil());
        Self::new(n, k as usize)
    }

    /// Microscopic length N^{-1/2}.
    pub fn eps(&self) -> f64 {
        1.0 / self.n.sqrt()
    }
}

/// (log|phi_k(z)|, arg phi_k(z)); the magnitude is `-inf` when z = 0 and k >= 1.
pub fn log_basis_eval(p: &FockParams, k: usize, z: Complex64) -> (f64, f64) {
    let n = p.n;
    if z == Complex64::new(0.0, 0.0) {
        return if k == 0 { (0.5 * n.ln(), 0.0) } else { (f64::NEG_INFINITY, 0.0) };
    }
    let kf = k as f64;
    let lm = kf * z.norm().ln() + 0.5 * ((kf + 1.0) * n.ln() - ln_gamma(kf + 1.0)) - 0.5 * n * z.norm_sqr();
    let phase = (kf * z.arg()).rem_euclid(std::f64::consts::TAU);
    let phase = if phase > std::f64::consts::PI { phase - std::f64::consts::TAU } else { phase };
    (lm, phase)
}

/// phi_0(z), ..., phi_{len-1}(z) by the log-domain recurrence
/// log|phi_k| = log|phi_{k-1}| + log|z| + (log N - log k) / 2.
pub fn basis_values(n: f64, len: usize, z: Complex64, out: &mut Vec<Complex64>) {
    out.clear();
    let r2 = z.norm_sqr();
    let mut lm = 0.5 * n.ln() - 0.5 * n * r2;
    if r2 == 0.0 {
        out.push(Complex64::new(lm.exp(), 0.0));
        out.resize(len, Complex64::new(0.0, 0.0));
        out.truncate(len);
        return;
    }
    let lr = 0.5 * r2.ln();
    let ln_n = n.ln();
    let unit = z / z.norm();
    let mut phase = Complex64::new(1.0, 0.0);
    for k in 0..len {
        if k > 0 {
            lm += lr + 0.5 * (ln_n - (k as f64).ln());
            phase *= unit;
            if k % 64 == 0 {
                phase /= phase.norm();
            }
        }
        out.push(phase * lm.exp());
    }
}

/// P_N(x, z) = N exp(N (x conj(z) - |x|^2/2 - |z|^2/2)) = sum_k phi_k(x) conj(phi_k(z)).
pub fn bergman_kernel(p: &FockParams, x: Complex64, z: Complex64) -> Complex64 {
    let n = p.n;
    (n * (x * z.conj() - 0.5 * x.norm_sqr() - 0.5 * z.norm_sqr())).exp() * n
}

/// Poisson tail P(Poisson(N I) >= K): the weight of basis indices >= K inside a disk of
/// gamma-measure I.
pub fn truncation_tail(p: &FockParams, action: f64) -> f64 {
    if action <= 0.0 {
        return 0.0;
    }
    poisson_upper_tail(p.n * action, p.k)
}

/// Unimodular factor of the magnetic translation u_x(z) = u(z - x) exp(N (z conj(x) - conj(z) x) / 2),
/// which maps the Fock space to itself.
pub fn magnetic_phase(p: &FockParams, x: Complex64, z: Complex64) -> Complex64 {
    (p.n * 0.5 * (z * x.conj() - z.conj() * x)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn log_basis_examples() {
        let p = FockParams::new(4.0, 8).unwrap();
        assert_eq!(log_basis_eval(&p, 0, c(0.0, 0.0)), (2f64.ln(), 0.0));
        assert_eq!(log_basis_eval(&p, 3, c(0.0, 0.0)).0, f64::NEG_INFINITY);
        let p1 = FockParams::new(1.0, 4).unwrap();
        let (lm, ph) = log_basis_eval(&p1, 1, c(1.0, 0.0));
        assert!((lm + 0.5).abs() < 1e-15 && ph == 0.0);
    }

    #[test]
    fn recurrence_matches_direct_formula() {
        let p = FockParams::new(100.0, 400).unwrap();
        let z = c(0.7, -0.9);
        let mut vals = Vec::new();
        basis_values(p.n, p.k, z, &mut vals);
        for k in [0usize, 1, 17, 99, 150, 399] {
            let (lm, ph) = log_basis_eval(&p, k, z);
            let want = Complex64::from_polar(lm.exp(), ph);
            assert!((vals[k] - want).norm() <= 1e-11 * want.norm().max(1e-300), "k={k}");
        }
    }

    #[test]
    fn bergman_examples() {
        let p = FockParams::new(1.0, 1).unwrap();
        assert!((bergman_kernel(&p, c(1.0, 0.0), c(0.0, 0.0)).re - (-0.5f64).exp()).abs() < 1e-15);
        let p = FockParams::new(7.0, 1).unwrap();
        let x = c(0.3, 0.2);
        assert!((bergman_kernel(&p, x, x) - c(7.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn truncation_tail_examples() {
        let p = FockParams::new(50.0, 100).unwrap();
        let tail = truncation_tail(&p, 1.0);
        assert!(tail <= 1e-9);
        // Chernoff: P(X >= K) <= exp(-lambda) (e lambda / K)^K
        let chernoff = (-50.0 + 100.0 * (1.0 + (50.0f64 / 100.0).ln())).exp();
        assert!(tail <= chernoff);
        let direct: f64 = (100..400).map(|j| (j as f64 * 50f64.ln() - 50.0 - ln_gamma(j as f64 + 1.0)).exp()).sum();
        assert!((tail - direct).abs() <= 1e-12 * direct);
        let median = truncation_tail(&FockParams::new(50.0, 50).unwrap(), 1.0);
        assert!(median > 0.3 && median < 0.7);
        assert_eq!(truncation_tail(&p, 0.0), 0.0);
    }

    #[test]
    fn for_action_floor() {
        let p = FockParams::for_action(64.0, 1.0, 2.0).unwrap();
        assert_eq!(p.k, 164);
        let p = FockParams::for_action(8.0, 1.0, 2.0).unwrap();
        assert_eq!(p.k, (8.0 + 10.0 * 8f64.sqrt() + 20.0f64).ceil() as usize);
        assert_eq!(FockParams::new(64.0, 1).unwrap().eps(), 0.125);
    }

    proptest! {
        #[test]
        fn kernel_magnitude_identity(x0 in -2.0f64..2.0, x1 in -2.0f64..2.0, z0 in -2.0f64..2.0, z1 in -2.0f64..2.0, n in 1.0f64..200.0) {
            let p = FockParams::new(n, 1).unwrap();
            let (x, z) = (c(x0, x1), c(z0, z1));
            let got = bergman_kernel(&p, x, z).norm();
            let want = n * (-0.5 * n * (x - z).norm_sqr()).exp();
            prop_assert!((got - want).abs() <= 1e-12 * want.max(1e-300));
            let sym = bergman_kernel(&p, z, x).conj();
            prop_assert!((bergman_kernel(&p, x, z) - sym).norm() <= 1e-12 * want.max(1e-300));
        }

        #[test]
        fn reproducing_sum(x0 in -1.0f64..1.0, x1 in -1.0f64..1.0, z0 in -1.0f64..1.0, z1 in -1.0f64..1.0) {
            let p = FockParams::new(30.0, 200).unwrap();
            let (x, z) = (c(x0, x1), c(z0, z1));
            let (mut bx, mut bz) = (Vec::new(), Vec::new());
            basis_values(p.n, p.k, x, &mut bx);
            basis_values(p.n, p.k, z, &mut bz);
            let s: Complex64 = bx.iter().zip(&bz).map(|(a, b)| a * b.conj()).sum();
            let want = bergman_kernel(&p, x, z);
            prop_assert!((s - want).norm() <= 1e-12 * p.n);
        }

        #[test]
        fn magnetic_translation_covariance(
            x0 in -1.0f64..1.0, x1 in -1.0f64..1.0, z0 in -1.0f64..1.0, z1 in -1.0f64..1.0,
            a0 in -1.0f64..1.0, a1 in -1.0f64..1.0, n in 1.0f64..40.0,
        ) {
            let p = FockParams::new(n, 1).unwrap();
            let (x, z, a) = (c(x0, x1), c(z0, z1), c(a0, a1));
            prop_assert!((magnetic_phase(&p, a, x).norm() - 1.0).abs() < 1e-12);
            let moved = bergman_kernel(&p, x + a, z + a);
            let want = magnetic_phase(&p, a, x + a) * bergman_kernel(&p, x, z) * magnetic_phase(&p, a, z + a).conj();
            prop_assert!((moved - want).norm() <= 1e-10 * n);
        }
    }

    #[test]
    fn translated_ground_state_is_coherent_state() {
        // phi_0(z - x) carried by the magnetic phase is P_N(z, x) / sqrt(N).
        let p = FockParams::new(12.0, 1).unwrap();
        let x = c(0.3, -0.2);
        let mut b = Vec::new();
        for z in [c(0.0, 0.0), c(0.4, 0.1), c(-0.2, 0.5)] {
            basis_values(p.n, 1, z - x, &mut b);
            let u = b[0] * magnetic_phase(&p, x, z);
            let want = bergman_kernel(&p, z, x) / p.n.sqrt();
            assert!((u - want).norm() < 1e-13, "{u} {want}");
        }
    }
}
