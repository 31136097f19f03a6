//! Hamiltonian flow of (-dV/dy, dV/dx) on a level curve, its period, and Fourier
//! coefficients of functions in the uniform time parametrization.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::{level_seed, Potential};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    /// Along (-dV/dy, dV/dx); counterclockwise around a minimum.
    Counterclockwise,
    /// Along the reversed field.
    Clockwise,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Give up if no return happens before this time.
    pub max_time: f64,
    /// Number of uniform samples M.
    pub samples: usize,
    pub orientation: Orientation,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { rtol: 1e-13, atol: 1e-15, max_time: 1e4, samples: 256, orientation: Orientation::Counterclockwise }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelCurve {
    pub mu: f64,
    pub period: f64,
    /// z at theta_m = 2 pi m / M.
    pub samples: Vec<Complex64>,
    /// Field (dx/dt, dy/dt) at each sample.
    pub velocities: Vec<[f64; 2]>,
    pub orientation: Orientation,
    pub base_point: Complex64,
    /// |z(T) - z0| after one full period.
    pub closure_error: f64,
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Stepper<'a> {
    v: &'a Potential,
    sign: f64,
    rtol: f64,
    atol: f64,
}

impl Stepper<'_> {
    fn field(&self, z: [f64; 2]) -> [f64; 2] {
        let p = self.v.perp_grad(Complex64::new(z[0], z[1]));
        [self.sign * p[0], self.sign * p[1]]
    }

    /// One step of size h; returns (5th-order solution, scaled error norm).
    fn step(&self, z: [f64; 2], h: f64) -> ([f64; 2], f64) {
        let _ = C;
        let mut k = [[0.0; 2]; 7];
        k[0] = self.field(z);
        for s in 1..7 {
            let mut y = z;
            for (j, kj) in k.iter().enumerate().take(s) {
                y[0] += h * A[s][j] * kj[0];
                y[1] += h * A[s][j] * kj[1];
            }
            k[s] = self.field(y);
        }
        let mut y5 = z;
        let mut e = [0.0; 2];
        for s in 0..7 {
            for d in 0..2 {
                y5[d] += h * B5[s] * k[s][d];
                e[d] += h * (B5[s] - B4[s]) * k[s][d];
            }
        }
        let mut err: f64 = 0.0;
        for d in 0..2 {
            let sc = self.atol + self.rtol * z[d].abs().max(y5[d].abs());
            err = err.max(e[d].abs() / sc);
        }
        (y5, err)
    }

    /// Adaptive step attempt; returns (new state, used h, suggested next h).
    fn adaptive(&self, z: [f64; 2], mut h: f64, h_cap: f64) -> ([f64; 2], f64, f64) {
        h = h.min(h_cap);
        loop {
            let (y, err) = self.step(z, h);
            if err <= 1.0 {
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                return (y, h, h * fac);
            }
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        }
    }
}

/// Integrates the flow through z0 for one period and samples it uniformly in time.
pub fn integrate_flow(v: &Potential, mu: f64, z0: Complex64, opts: &FlowOptions) -> Result<LevelCurve> {
    let sign = match opts.orientation {
        Orientation::Counterclockwise => 1.0,
        Orientation::Clockwise => -1.0,
    };
    let st = Stepper { v, sign, rtol: opts.rtol, atol: opts.atol };
    let y0 = [z0.re, z0.im];
    let f0 = st.field(y0);
    let speed0 = f0[0].hypot(f0[1]);
    if speed0 < 1e-10 {
        return Err(Error::CriticalPoint { x: z0.re, y: z0.im });
    }
    let n = [f0[0] / speed0, f0[1] / speed0];
    let sec = |y: [f64; 2]| (y[0] - y0[0]) * n[0] + (y[1] - y0[1]) * n[1];
    let dist = |y: [f64; 2]| (y[0] - y0[0]).hypot(y[1] - y0[1]);
    let scale = z0.norm().max(1e-3);

    // First pass: find the return to the section.
    let mut t = 0.0;
    let mut y = y0;
    let mut h = 1e-3 * scale / speed0;
    let mut d_max: f64 = 0.0;
    let period = loop {
        if t > opts.max_time {
            return Err(Error::CurveNotClosed { t });
        }
        let (yn, used, next) = st.adaptive(y, h, f64::INFINITY);
        let fnew = st.field(yn);
        if fnew[0].hypot(fnew[1]) < 1e-10 {
            return Err(Error::CriticalPoint { x: yn[0], y: yn[1] });
        }
        let (s_old, s_new) = (sec(y), sec(yn));
        d_max = d_max.max(dist(yn));
        if s_old < 0.0 && s_new >= 0.0 && dist(yn) < 0.5 * d_max {
            // Secant on tau -> sec(step(y, tau)) over [0, used].
            let (mut a, mut fa) = (0.0, s_old);
            let (mut b, mut fb) = (used, s_new);
            for _ in 0..60 {
                let c = b - fb * (b - a) / (fb - fa);
                if !c.is_finite() {
                    break;
                }
                let fc = sec(st.step(y, c).0);
                a = b;
                fa = fb;
                b = c;
                fb = fc;
                if (b - a).abs() <= 1e-15 * (t + b) || fc == 0.0 {
                    break;
                }
            }
            break t + b;
        }
        t += used;
        y = yn;
        h = next;
    };

    // Second pass: hit t_m = m T / M exactly.
    let m_samples = opts.samples;
    let mut samples = Vec::with_capacity(m_samples);
    let mut velocities = Vec::with_capacity(m_samples);
    let mut y = y0;
    let mut t = 0.0;
    let mut h = 1e-3 * scale / speed0;
    for m in 0..=m_samples {
        let target = period * m as f64 / m_samples as f64;
        while target - t > 1e-15 * period {
            let (yn, used, next) = st.adaptive(y, h, target - t);
            t += used;
            y = yn;
            if used < target - t + used {
                h = next;
            }
        }
        t = target;
        if m < m_samples {
            samples.push(Complex64::new(y[0], y[1]));
            velocities.push(st.field(y));
        }
    }
    let closure_error = dist(y);
    Ok(LevelCurve {
        mu,
        period,
        samples,
        velocities,
        orientation: opts.orientation,
        base_point: z0,
        closure_error,
    })
}

/// The level curve through the seed on the positive real axis.
pub fn level_curve(v: &Potential, mu: f64, opts: &FlowOptions) -> Result<LevelCurve> {
    let z0 = level_seed(v, mu)?;
    integrate_flow(v, mu, z0, opts)
}

impl LevelCurve {
    /// gamma-measure of the enclosed region, (1/2 pi) oint (x dy - y dx).
    pub fn enclosed_action(&self) -> f64 {
        let m = self.samples.len() as f64;
        let s: f64 = self
            .samples
            .iter()
            .zip(&self.velocities)
            .map(|(z, v)| 0.5 * (z.re * v[1] - z.im * v[0]))
            .sum();
        (s * self.period / m / std::f64::consts::PI).abs()
    }

    /// Largest |V(z_theta) - mu| over the samples.
    pub fn energy_drift(&self, v: &Potential) -> f64 {
        self.samples.iter().map(|z| (v.eval(*z) - self.mu).abs()).fold(0.0, f64::max)
    }

    /// CSV rows (theta, re, im, V).
    pub fn to_csv(&self, v: &Potential) -> String {
        let m = self.samples.len();
        let mut s = String::from("theta,re,im,V\n");
        for (i, z) in self.samples.iter().enumerate() {
            let th = std::f64::consts::TAU * i as f64 / m as f64;
            s.push_str(&format!("{:.16e},{:.16e},{:.16e},{:.16e}\n", th, z.re, z.im, v.eval(*z)));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierAlongFlow {
    /// Coefficients for k = -k_max..=k_max; index k + k_max.
    pub coeffs: Vec<Complex64>,
    pub k_max: usize,
    pub level: f64,
    pub action: f64,
}

impl FourierAlongFlow {
    pub fn get(&self, k: i64) -> Complex64 {
        if k.unsigned_abs() as usize > self.k_max {
            return Complex64::new(0.0, 0.0);
        }
        self.coeffs[(k + self.k_max as i64) as usize]
    }

    /// sum_{k >= 1} k |f_k|^2.
    pub fn sigma1(&self) -> f64 {
        (1..=self.k_max as i64).map(|k| k as f64 * self.get(k).norm_sqr()).sum()
    }

    /// sum_{k > k_max/2} k |f_k|^2, a resolution diagnostic.
    pub fn tail(&self) -> f64 {
        (self.k_max as i64 / 2 + 1..=self.k_max as i64).map(|k| k as f64 * self.get(k).norm_sqr()).sum()
    }
}

/// f_k = (1/M) sum_m f(z_m) e^{-i k theta_m}.
pub fn fourier_along_flow(curve: &LevelCurve, f: &dyn Fn(Complex64) -> f64, k_max: usize) -> Result<FourierAlongFlow> {
    let m = curve.samples.len();
    if m < 4 * k_max + 8 {
        return Err(Error::InvalidParameter(format!("{m} samples cannot resolve k_max = {k_max}")));
    }
    let vals: Vec<f64> = curve.samples.iter().map(|z| f(*z)).collect();
    let mut coeffs = Vec::with_capacity(2 * k_max + 1);
    for k in -(k_max as i64)..=(k_max as i64) {
        let mut s = Complex64::new(0.0, 0.0);
        for (j, v) in vals.iter().enumerate() {
            let idx = (k * j as i64).rem_euclid(m as i64) as f64;
            s += Complex64::from_polar(*v, -std::f64::consts::TAU * idx / m as f64);
        }
        coeffs.push(s / m as f64);
    }
    Ok(FourierAlongFlow { coeffs, k_max, level: curve.mu, action: curve.enclosed_action() })
}

/// Sigma^1 = sum_{k >= 1} k |f_k|^2 along the curve at mu, doubling the sampling until the
/// upper half of the spectrum carries less than `tol`.
pub fn sigma1_along_level(v: &Potential, mu: f64, f: &dyn Fn(Complex64) -> f64, tol: f64) -> Result<(f64, LevelCurve)> {
    let mut opts = FlowOptions::default();
    loop {
        let curve = level_curve(v, mu, &opts)?;
        let k_max = (opts.samples - 8) / 4;
        let fc = fourier_along_flow(&curve, f, k_max)?;
        if fc.tail() < tol || opts.samples >= 1 << 14 {
            return Ok((fc.sigma1(), curve));
        }
        opts.samples *= 2;
    }
}

/// Fourier coefficients a_n(I_lambda) of g along each level, with the Lipschitz diagnostic
/// max_n |a_n(I) - a_n(I')| / |I - I'| over consecutive levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolFamily {
    pub entries: Vec<FourierAlongFlow>,
    pub lipschitz: f64,
}

pub fn symbol_family(v: &Potential, g: &dyn Fn(Complex64) -> f64, levels: &[f64], k_max: usize, opts: &FlowOptions) -> Result<SymbolFamily> {
    let mut entries = levels
        .iter()
        .map(|&l| {
            let curve = level_curve(v, l, opts)?;
            fourier_along_flow(&curve, g, k_max)
        })
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| a.action.total_cmp(&b.action));
    let mut lipschitz: f64 = 0.0;
    for w in entries.windows(2) {
        let di = (w[1].action - w[0].action).abs();
        if di > 0.0 {
            let dn = w[0].coeffs.iter().zip(&w[1].coeffs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            lipschitz = lipschitz.max(dn / di);
        }
    }
    Ok(SymbolFamily { entries, lipschitz })
}

/// Level lambda with I_lambda = `action`, by Newton iteration using dI/dlambda = T / pi.
pub fn level_of_action(v: &Potential, action: f64, guess: f64, opts: &FlowOptions) -> Result<(f64, LevelCurve)> {
    let mut lam = guess;
    for _ in 0..40 {
        let curve = level_curve(v, lam, opts)?;
        let i = curve.enclosed_action();
        let step = (i - action) * std::f64::consts::PI / curve.period;
        if step.abs() <= 1e-14 * (1.0 + lam.abs()) {
            return Ok((lam, curve));
        }
        lam -= step;
    }
    let curve = level_curve(v, lam, opts)?;
    Ok((lam, curve))
}
