//! Confining potentials, droplet geometry and the action map.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::special::gauss_legendre;

/// Real polynomial in t = |z|^2, coefficients in ascending degree.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialProfile {
    coeffs: Vec<f64>,
}

impl RadialProfile {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().skip(1).any(|c| *c < 0.0) || !coeffs.iter().skip(1).any(|c| *c > 0.0) {
            return Err(Error::InvalidParameter(
                "radial profile must have nonnegative coefficients of positive degree, not all zero"
                    .into(),
            ));
        }
        Ok(Self { coeffs })
    }

    /// Parses expressions like `t`, `t^2`, `0.5 + 2*t - 0.1*t^3`.
    pub fn parse(expr: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("cannot parse radial profile {expr:?}"));
        let compact: String = expr.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() {
            return Err(bad());
        }
        let mut terms = Vec::new();
        let mut start = 0;
        let bytes = compact.as_bytes();
        for i in 1..bytes.len() {
            let prev = bytes[i - 1];
            if (bytes[i] == b'+' || bytes[i] == b'-') && prev != b'e' && prev != b'E' && prev != b'^' {
                terms.push(&compact[start..i]);
                start = i;
            }
        }
        terms.push(&compact[start..]);
        let mut coeffs = vec![0.0f64];
        for term in terms {
            let (sign, body) = match term.as_bytes()[0] {
                b'+' => (1.0, &term[1..]),
                b'-' => (-1.0, &term[1..]),
                _ => (1.0, term),
            };
            let (c, deg) = match body.find('t') {
                None => (body.parse::<f64>().map_err(|_| bad())?, 0usize),
                Some(pos) => {
                    let c = if pos == 0 {
                        1.0
                    } else {
                        let head = body[..pos].strip_suffix('*').ok_or_else(bad)?;
                        head.parse::<f64>().map_err(|_| bad())?
                    };
                    let tail = &body[pos + 1..];
                    let deg = if tail.is_empty() {
                        1
                    } else {
                        tail.strip_prefix('^').ok_or_else(bad)?.parse::<usize>().map_err(|_| bad())?
                    };
                    (c, deg)
                }
            };
            if coeffs.len() <= deg {
                coeffs.resize(deg + 1, 0.0);
            }
            coeffs[deg] += sign * c;
        }
        Self::new(coeffs)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (i, c)| acc * t + i as f64 * c)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }
}

/// Potential families. Gradients are exact.
#[derive(Clone, Debug, PartialEq)]
pub enum Potential {
    /// V(z) = v(|z|^2).
    Radial(RadialProfile),
    /// V(z) = |z|^2 + t Re(z^2).
    AnisotropicQuadratic { t: f64 },
    /// V(x, y) = sum of c x^i y^j.
    PolynomialXY(Vec<(u32, u32, f64)>),
}

/// Serialized form of a potential as it appears in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum PotentialSpec {
    Radial { profile: String },
    Aniso { t: f64 },
    Polyxy { coeffs: Vec<(u32, u32, f64)> },
}

impl PotentialSpec {
    pub fn build(&self) -> Result<Potential> {
        match self {
            PotentialSpec::Radial { profile } => Ok(Potential::Radial(RadialProfile::parse(profile)?)),
            PotentialSpec::Aniso { t } => Potential::anisotropic(*t),
            PotentialSpec::Polyxy { coeffs } => Ok(Potential::PolynomialXY(coeffs.clone())),
        }
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl Potential {
    pub fn ginibre() -> Self {
        Potential::Radial(RadialProfile { coeffs: vec![0.0, 1.0] })
    }

    pub fn anisotropic(t: f64) -> Result<Self> {
        if !(t.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!("anisotropy |t| < 1 required, got {t}")));
        }
        Ok(Potential::AnisotropicQuadratic { t })
    }

    pub fn spec(&self) -> PotentialSpec {
        match self {
            Potential::Radial(p) => {
                let profile = p
                    .coeffs
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| **c != 0.0)
                    .map(|(i, c)| match i {
                        0 => format!("{c:e}"),
                        1 => format!("{c:e}*t"),
                        _ => format!("{c:e}*t^{i}"),
                    })
                    .collect::<Vec<_>>()
                    .join("+");
                PotentialSpec::Radial { profile }
            }
            Potential::AnisotropicQuadratic { t } => PotentialSpec::Aniso { t: *t },
            Potential::PolynomialXY(c) => PotentialSpec::Polyxy { coeffs: c.clone() },
        }
    }

    pub fn radial_profile(&self) -> Option<&RadialProfile> {
        match self {
            Potential::Radial(p) => Some(p),
            _ => None,
        }
    }

    pub fn eval(&self, z: Complex64) -> f64 {
        match self {
            Potential::Radial(p) => p.eval(z.norm_sqr()),
            Potential::AnisotropicQuadratic { t } => z.norm_sqr() + t * (z.re * z.re - z.im * z.im),
            Potential::PolynomialXY(c) => c
                .iter()
                .map(|&(i, j, a)| a * z.re.powi(i as i32) * z.im.powi(j as i32))
                .sum(),
        }
    }

    /// (dV/dx, dV/dy).
    pub fn grad(&self, z: Complex64) -> [f64; 2] {
        match self {
            Potential::Radial(p) => {
                let d = 2.0 * p.derivative(z.norm_sqr());
                [d * z.re, d * z.im]
            }
            Potential::AnisotropicQuadratic { t } => {
                [2.0 * (1.0 + t) * z.re, 2.0 * (1.0 - t) * z.im]
            }
            Potential::PolynomialXY(c) => {
                let mut g = [0.0, 0.0];
                for &(i, j, a) in c {
                    if i > 0 {
                        g[0] += a * i as f64 * z.re.powi(i as i32 - 1) * z.im.powi(j as i32);
                    }
                    if j > 0 {
                        g[1] += a * j as f64 * z.re.powi(i as i32) * z.im.powi(j as i32 - 1);
                    }
                }
                g
            }
        }
    }

    /// Hamiltonian vector field (-dV/dy, dV/dx).
    pub fn perp_grad(&self, z: Complex64) -> [f64; 2] {
        let g = self.grad(z);
        [-g[1], g[0]]
    }

    /// The potential composed with a rotation by `alpha`: z -> V(e^{-i alpha} z).
    /// Only meaningful as a structural operation on polynomial families.
    pub fn rotated(&self, alpha: f64) -> Potential {
        match self {
            Potential::Radial(_) => self.clone(),
            Potential::AnisotropicQuadratic { t } => {
                // |z|^2 + t Re(e^{-2i alpha} z^2)
                let (c, s) = ((2.0 * alpha).cos(), (2.0 * alpha).sin());
                Potential::PolynomialXY(vec![
                    (2, 0, 1.0 + t * c),
                    (0, 2, 1.0 - t * c),
                    (1, 1, 2.0 * t * s),
                ])
            }
            Potential::PolynomialXY(terms) => {
                // x' = x cos + y sin, y' = -x sin + y cos
                let (c, s) = (alpha.cos(), alpha.sin());
                let mut out: std::collections::BTreeMap<(u32, u32), f64> = Default::default();
                for &(i, j, a) in terms {
                    let px = binomial_expand(c, s, i);
                    let py = binomial_expand(-s, c, j);
                    for (dx, cx) in px.iter().enumerate() {
                        for (dy, cy) in py.iter().enumerate() {
                            // px[dx]: coefficient of x^(i-dx) y^dx
                            let ex = (i as usize - dx) + (j as usize - dy);
                            let ey = dx + dy;
                            *out.entry((ex as u32, ey as u32)).or_default() += a * cx * cy;
                        }
                    }
                }
                Potential::PolynomialXY(
                    out.into_iter().filter(|(_, v)| *v != 0.0).map(|((i, j), v)| (i, j, v)).collect(),
                )
            }
        }
    }

    /// Minimum of V over a polar sampling of the disk of radius `r`.
    pub fn sampled_min(&self, r: f64) -> f64 {
        let mut m = f64::INFINITY;
        for ir in 0..=64 {
            let rr = r * ir as f64 / 64.0;
            for it in 0..128 {
                let th = std::f64::consts::TAU * it as f64 / 128.0;
                m = m.min(self.eval(Complex64::from_polar(rr, th)));
            }
        }
        m
    }
}

/// Coefficients of (a x + b y)^n as a vector indexed by the power of y.
fn binomial_expand(a: f64, b: f64, n: u32) -> Vec<f64> {
    let n = n as usize;
    let mut out = vec![0.0; n + 1];
    let mut binom = 1.0f64;
    for k in 0..=n {
        out[k] = binom * a.powi((n - k) as i32) * b.powi(k as i32);
        binom = binom * (n - k) as f64 / (k + 1) as f64;
    }
    out
}

/// Fermi level, margin and the measured droplet size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropletSpec {
    pub mu: f64,
    pub delta: f64,
    pub area_gamma: f64,
}

impl DropletSpec {
    pub fn new(v: &Potential, mu: f64, delta: f64, grid: &DropletGrid) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
        }
        bounding_radius(v, mu + delta, grid.r_limit)?;
        let area_gamma = droplet_area(v, mu, grid)?;
        if !(area_gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("empty droplet at mu = {mu}")));
        }
        Ok(Self { mu, delta, area_gamma })
    }
}

/// Resolution parameters for integrals over sublevel sets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DropletGrid {
    /// Initial number of rays.
    pub n_theta: usize,
    /// Relative change at which ray doubling stops.
    pub tol: f64,
    /// Maximum number of ray doublings.
    pub max_refinements: usize,
    /// Radius beyond which the sublevel set is declared non-compact.
    pub r_limit: f64,
    /// Radial panels per crossing segment and Gauss nodes per panel.
    pub panels: usize,
    pub nodes_per_panel: usize,
}

impl Default for DropletGrid {
    fn default() -> Self {
        Self { n_theta: 64, tol: 1e-10, max_refinements: 8, r_limit: 1e3, panels: 8, nodes_per_panel: 16 }
    }
}

/// Smallest sampled radius r with V >= level on the circle |z| = r and on a few larger circles.
pub fn bounding_radius(v: &Potential, level: f64, r_limit: f64) -> Result<f64> {
    let circle_min = |r: f64| {
        (0..256)
            .map(|i| v.eval(Complex64::from_polar(r, std::f64::consts::TAU * i as f64 / 256.0)))
            .fold(f64::INFINITY, f64::min)
    };
    let mut r = 1e-3;
    while r <= r_limit {
        if circle_min(r) >= level && (1..=4).all(|m| circle_min(r * (1.0 + 0.25 * m as f64)) >= level) {
            return Ok(r);
        }
        r *= 1.02;
    }
    Err(Error::DropletNotCompact { r_max: r_limit })
}

/// Sub-intervals of [0, r_max] on the ray at angle `theta` where V < level.
pub fn ray_segments(v: &Potential, level: f64, theta: f64, r_max: f64) -> Vec<(f64, f64)> {
    const SCAN: usize = 256;
    let dir = Complex64::from_polar(1.0, theta);
    let g = |r: f64| v.eval(dir * r) - level;
    let bisect = |mut a: f64, mut b: f64| {
        let ga = g(a);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if (g(m) < 0.0) == (ga < 0.0) {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    };
    let mut segs = Vec::new();
    let mut prev_r = 0.0;
    let mut prev_in = g(0.0) < 0.0;
    let mut open = if prev_in { Some(0.0) } else { None };
    for i in 1..=SCAN {
        let r = r_max * i as f64 / SCAN as f64;
        let inside = g(r) < 0.0;
        if inside != prev_in {
            let c = bisect(prev_r, r);
            if inside {
                open = Some(c);
            } else if let Some(a) = open.take() {
                segs.push((a, c));
            }
        }
        prev_r = r;
        prev_in = inside;
    }
    if let Some(a) = open {
        segs.push((a, r_max));
    }
    segs
}

fn ray_sum_area(v: &Potential, level: f64, r_max: f64, n_theta: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n_theta {
        let th = std::f64::consts::TAU * i as f64 / n_theta as f64;
        for (a, b) in ray_segments(v, level, th, r_max) {
            s += b * b - a * a;
        }
    }
    s / n_theta as f64
}

/// gamma-measure of {V < mu}, with d gamma = d^2 z / pi.
pub fn droplet_area(v: &Potential, mu: f64, grid: &DropletGrid) -> Result<f64> {
    let r_max = bounding_radius(v, mu, grid.r_limit)?;
    let mut n = grid.n_theta.max(8);
    let mut prev = ray_sum_area(v, mu, r_max, n);
    for _ in 0..grid.max_refinements {
        n *= 2;
        let cur = ray_sum_area(v, mu, r_max, n);
        if (cur - prev).abs() <= grid.tol.max(1e-14) * cur.abs().max(1e-300) {
            return Ok(cur);
        }
        prev = cur;
    }
    Ok(prev)
}

/// I_lambda = gamma({V < lambda}); zero for an empty sublevel set.
pub fn action_of_level(v: &Potential, lambda: f64, grid: &DropletGrid) -> Result<f64> {
    droplet_area(v, lambda, grid)
}

/// Integral of h over {V < mu} against d gamma, by rays with composite Gauss panels.
pub fn droplet_integral(
    v: &Potential,
    mu: f64,
    grid: &DropletGrid,
    h: &(dyn Fn(Complex64) -> f64 + Sync),
) -> Result<f64> {
    let r_max = bounding_radius(v, mu, grid.r_limit)?;
    let (gx, gw) = gauss_legendre(grid.nodes_per_panel);
    let pass = |n_theta: usize| -> f64 {
        let mut total = 0.0;
        for i in 0..n_theta {
            let th = std::f64::consts::TAU * i as f64 / n_theta as f64;
            let dir = Complex64::from_polar(1.0, th);
            for (a, b) in ray_segments(v, mu, th, r_max) {
                let hp = (b - a) / grid.panels as f64;
                for p in 0..grid.panels {
                    let lo = a + hp * p as f64;
                    for (x, w) in gx.iter().zip(&gw) {
                        let r = lo + 0.5 * hp * (x + 1.0);
                        total += 0.5 * hp * w * r * h(dir * r);
                    }
                }
            }
        }
        // (1/pi) * (2 pi / n_theta) * sum
        2.0 * total / n_theta as f64
    };
    let mut n = grid.n_theta.max(8);
    let mut prev = pass(n);
    for _ in 0..grid.max_refinements {
        n *= 2;
        let cur = pass(n);
        if (cur - prev).abs() <= grid.tol.max(1e-14) * cur.abs().max(1e-12) {
            return Ok(cur);
        }
        prev = cur;
    }
    Ok(prev)
}

/// A point z0 on {V = mu}: bisection along the positive real axis, then Newton.
pub fn level_seed(v: &Potential, mu: f64) -> Result<Complex64> {
    let g = |x: f64| v.eval(Complex64::new(x, 0.0)) - mu;
    let not_found = || Error::LevelSetNotFound { mu };
    if g(0.0) >= 0.0 {
        return Err(not_found());
    }
    let mut hi = 1e-3;
    while g(hi) < 0.0 {
        hi *= 1.5;
        if hi > 1e8 {
            return Err(not_found());
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if m <= lo || m >= hi {
            break;
        }
        if g(m) < 0.0 {
            lo = m;
        } else {
            hi = m;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..8 {
        let d = v.grad(Complex64::new(x, 0.0))[0];
        if d == 0.0 {
            break;
        }
        let step = g(x) / d;
        x -= step;
        if step.abs() < 1e-17 * x.abs() {
            break;
        }
    }
    let z = Complex64::new(x, 0.0);
    let gn = v.grad(z);
    if (gn[0] * gn[0] + gn[1] * gn[1]).sqrt() == 0.0 || g(x).abs() > 1e-12 * (1.0 + mu.abs()) {
        return Err(not_found());
    }
    Ok(z)
}
