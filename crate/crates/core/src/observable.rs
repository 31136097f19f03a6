//! Test functions: finite sums of products of atoms with exact gradients.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Real scalar field on the plane with an exact gradient.
pub trait ScalarField: Sync {
    fn value(&self, z: Complex64) -> f64;
    fn grad(&self, z: Complex64) -> [f64; 2];
}

/// Compact bump exp(1 - 1/(1 - u^2)) on |u| < 1, equal to 1 at u = 0.
fn bump(u: f64) -> (f64, f64) {
    let q = 1.0 - u * u;
    if q <= 0.0 {
        return (0.0, 0.0);
    }
    let b = (1.0 - 1.0 / q).exp();
    (b, b * (-2.0 * u / (q * q)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "atom", rename_all = "snake_case", deny_unknown_fields)]
pub enum Atom {
    Const,
    ReZ,
    ImZ,
    /// Re(z^2) = x^2 - y^2.
    ReZ2,
    /// Im(z^2) = 2xy.
    ImZ2,
    /// exp(-|z - c|^2 / s^2).
    GaussBump { center: [f64; 2], width: f64 },
    /// Compact bump in |z| centred at radius `radius` with half-width `width`.
    RadialBump { radius: f64, width: f64 },
    /// Compact bump on the disk |z - c| < radius.
    DiskBump { center: [f64; 2], radius: f64 },
    /// Compact bump in q(z) = a x^2 + 2 b xy + c y^2 centred at `level` with half-width `width`.
    QuadBump { a: f64, b: f64, c: f64, level: f64, width: f64 },
    /// (1 - u^2)^power with u = (q(z) - level) / width, q as for `QuadBump`; C^{power - 1}.
    QuadPoly { a: f64, b: f64, c: f64, level: f64, width: f64, power: u32 },
}

impl Atom {
    fn eval(&self, z: Complex64) -> (f64, [f64; 2]) {
        let (x, y) = (z.re, z.im);
        match *self {
            Atom::Const => (1.0, [0.0, 0.0]),
            Atom::ReZ => (x, [1.0, 0.0]),
            Atom::ImZ => (y, [0.0, 1.0]),
            Atom::ReZ2 => (x * x - y * y, [2.0 * x, -2.0 * y]),
            Atom::ImZ2 => (2.0 * x * y, [2.0 * y, 2.0 * x]),
            Atom::GaussBump { center, width } => {
                let (dx, dy) = (x - center[0], y - center[1]);
                let s2 = width * width;
                let v = (-(dx * dx + dy * dy) / s2).exp();
                (v, [-2.0 * dx / s2 * v, -2.0 * dy / s2 * v])
            }
            Atom::RadialBump { radius, width } => {
                let r = z.norm();
                let (b, db) = bump((r - radius) / width);
                if b == 0.0 || r == 0.0 {
                    return (b, [0.0, 0.0]);
                }
                let s = db / (width * r);
                (b, [s * x, s * y])
            }
            Atom::DiskBump { center, radius } => {
                let (dx, dy) = (x - center[0], y - center[1]);
                let r = (dx * dx + dy * dy).sqrt();
                let (b, db) = bump(r / radius);
                if b == 0.0 || r == 0.0 {
                    return (b, [0.0, 0.0]);
                }
                let s = db / (radius * r);
                (b, [s * dx, s * dy])
            }
            Atom::QuadBump { a, b, c, level, width } => {
                let q = a * x * x + 2.0 * b * x * y + c * y * y;
                let (v, dv) = bump((q - level) / width);
                let s = dv / width;
                (v, [s * (2.0 * a * x + 2.0 * b * y), s * (2.0 * b * x + 2.0 * c * y)])
            }
            Atom::QuadPoly { a, b, c, level, width, power } => {
                let q = a * x * x + 2.0 * b * x * y + c * y * y;
                let u = (q - level) / width;
                let base = 1.0 - u * u;
                if base <= 0.0 || power == 0 {
                    return (if power == 0 { 1.0 } else { 0.0 }, [0.0, 0.0]);
                }
                let v = base.powi(power as i32);
                let s = -2.0 * u * power as f64 * base.powi(power as i32 - 1) / width;
                (v, [s * (2.0 * a * x + 2.0 * b * y), s * (2.0 * b * x + 2.0 * c * y)])
            }
        }
    }

    /// Radius of a disk centred at 0 containing the support, if compact.
    fn support_radius(&self) -> Option<f64> {
        match *self {
            Atom::RadialBump { radius, width } => Some(radius + width),
            Atom::DiskBump { center, radius } => Some(center[0].hypot(center[1]) + radius),
            Atom::QuadBump { a, b, c, level, width } | Atom::QuadPoly { a, b, c, level, width, .. } => {
                // smallest eigenvalue of [[a, b], [b, c]]
                let m = 0.5 * (a + c) - (0.25 * (a - c) * (a - c) + b * b).sqrt();
                (m > 0.0).then(|| ((level + width) / m).sqrt())
            }
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub coef: f64,
    pub atoms: Vec<Atom>,
}

/// f(z) = sum over terms of coef * product of atoms.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunction {
    pub terms: Vec<Term>,
}

impl TestFunction {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn atom(coef: f64, atom: Atom) -> Self {
        Self { terms: vec![Term { coef, atoms: vec![atom] }] }
    }

    pub fn product(coef: f64, atoms: Vec<Atom>) -> Self {
        Self { terms: vec![Term { coef, atoms }] }
    }

    pub fn constant(c: f64) -> Self {
        Self::atom(c, Atom::Const)
    }

    pub fn re_z() -> Self {
        Self::atom(1.0, Atom::ReZ)
    }

    pub fn plus(mut self, other: &TestFunction) -> Self {
        self.terms.extend(other.terms.iter().cloned());
        self
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for t in &mut self.terms {
            t.coef *= s;
        }
        self
    }

    /// Radius of a centred disk containing the support when every term has a compact factor.
    pub fn support_radius(&self) -> Option<f64> {
        self.terms.iter().try_fold(0.0f64, |acc, t| {
            let r = t.atoms.iter().filter_map(Atom::support_radius).fold(f64::INFINITY, f64::min);
            r.is_finite().then(|| acc.max(r))
        })
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.coef == 0.0)
    }
}

impl ScalarField for TestFunction {
    fn value(&self, z: Complex64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coef * t.atoms.iter().map(|a| a.eval(z).0).product::<f64>())
            .sum()
    }

    fn grad(&self, z: Complex64) -> [f64; 2] {
        let mut g = [0.0, 0.0];
        for t in &self.terms {
            let vals: Vec<(f64, [f64; 2])> = t.atoms.iter().map(|a| a.eval(z)).collect();
            for i in 0..vals.len() {
                let others: f64 = vals.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v.0).product();
                g[0] += t.coef * vals[i].1[0] * others;
                g[1] += t.coef * vals[i].1[1] * others;
            }
        }
        g
    }
}

/// Scalar field given by closures.
pub struct FnField<F, G> {
    pub f: F,
    pub g: G,
}

impl<F, G> ScalarField for FnField<F, G>
where
    F: Fn(Complex64) -> f64 + Sync,
    G: Fn(Complex64) -> [f64; 2] + Sync,
{
    fn value(&self, z: Complex64) -> f64 {
        (self.f)(z)
    }
    fn grad(&self, z: Complex64) -> [f64; 2] {
        (self.g)(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn library() -> Vec<TestFunction> {
        vec![
            TestFunction::re_z(),
            TestFunction::atom(0.7, Atom::ImZ2).plus(&TestFunction::atom(-0.2, Atom::ReZ2)),
            TestFunction::atom(1.0, Atom::GaussBump { center: [0.3, -0.1], width: 0.4 }),
            TestFunction::product(0.3, vec![Atom::ReZ, Atom::RadialBump { radius: 1.0, width: 0.2 }]),
            TestFunction::atom(0.5, Atom::DiskBump { center: [0.45, 0.0], radius: 0.2 }),
            TestFunction::product(0.4, vec![Atom::ImZ, Atom::QuadBump { a: 1.3, b: 0.1, c: 0.7, level: 1.0, width: 0.2 }]),
            TestFunction::product(0.2, vec![Atom::ReZ, Atom::QuadPoly { a: 1.5, b: 0.0, c: 0.5, level: 1.0, width: 0.45, power: 4 }]),
        ]
    }

    #[test]
    fn support_radius_hint() {
        assert_eq!(TestFunction::re_z().support_radius(), None);
        assert_eq!(library()[3].support_radius(), Some(1.2));
        assert!((library()[4].support_radius().unwrap() - 0.65).abs() < 1e-15);
        let z = Complex64::new(0.0, 0.66);
        assert_eq!(library()[4].value(z), 0.0);
    }

    #[test]
    fn serde_form() {
        let f: TestFunction = serde_json::from_str(
            r#"{"terms":[{"coef":0.3,"atoms":[{"atom":"re_z"},{"atom":"radial_bump","radius":1.0,"width":0.2}]}]}"#,
        )
        .unwrap();
        assert_eq!(f, library()[3]);
        assert!(serde_json::from_str::<TestFunction>(r#"{"terms":[],"extra":1}"#).is_err());
    }

    proptest! {
        #[test]
        fn gradient_matches_central_differences(x in -1.6f64..1.6, y in -1.6f64..1.6) {
            let h = 1e-6;
            let z = Complex64::new(x, y);
            for f in library() {
                let g = f.grad(z);
                let fx = (f.value(z + h) - f.value(z - h)) / (2.0 * h);
                let fy = (f.value(z + Complex64::new(0.0, h)) - f.value(z - Complex64::new(0.0, h))) / (2.0 * h);
                let scale = 1.0 + g[0].abs() + g[1].abs();
                prop_assert!((fx - g[0]).abs() <= 1e-6 * scale, "{f:?} {fx} {g:?}");
                prop_assert!((fy - g[1]).abs() <= 1e-6 * scale);
            }
        }

        #[test]
        fn linear_growth_of_first_order_atoms(x in -50.0f64..50.0, y in -50.0f64..50.0) {
            let z = Complex64::new(x, y);
            for f in [&library()[0], &library()[2], &library()[3], &library()[4]] {
                prop_assert!(f.value(z).abs() <= 2.0 * (1.0 + z.norm()));
            }
        }
    }
}
