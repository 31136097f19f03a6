//! The acceptance suite. Each criterion builds its own fixtures, so results do not depend on the
//! experiment config.

use fockdpp::operator::{build_spectrum, decay_diagnostics, universality_check, ProbeGrid};
use fockdpp::quadrature::FockQuadrature;
use fockdpp::sampler::{empirical_statistics, sample_many};
use fockdpp::statistic::{
    decorrelation_defect, gauss_bound_check, laplace_functional, mean_linear_statistic, predicted_variance,
    upsilon_second_derivative, variance_additivity_check, variance_linear_statistic, Cutoffs,
};
use fockdpp::toeplitz::{
    build_edge_matrices, build_edge_matrices_for, edge_clt, edge_conditions_check, mid_window_defects,
    replacement_bound_check, szego_asymptotics,
};
use fockdpp::{
    Atom, Complex64, DropletGrid, DropletSpec, Ensemble, FockParams, KernelField, Potential, QuadratureSpec,
    Result, SamplerConfig, TestFunction, Workspace,
};

/// Criteria whose stated target disagrees with the exact finite-N values; they are run as stated
/// and expected to fail.
pub const KNOWN_UNATTAINABLE: &[u8] = &[5];

pub const ALL: [u8; 11] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11];

/// Criteria that finish in a few seconds.
pub const QUICK: [u8; 4] = [1, 2, 6, 10];

#[derive(Clone, Debug)]
pub struct CriterionReport {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub summary: String,
    pub details: Vec<String>,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        format!("criterion {:>2} {} {}: {}", self.id, if self.pass { "PASS" } else { "FAIL" }, self.name, self.summary)
    }

    fn error(id: u8, name: &'static str, e: fockdpp::Error) -> Self {
        Self { id, name, pass: false, summary: format!("error: {e}"), details: Vec::new() }
    }
}

/// Parses `all`, `quick`, or a comma-separated list of criterion numbers.
pub fn parse_suite(s: &str) -> std::result::Result<Vec<u8>, String> {
    match s.trim() {
        "all" => Ok(ALL.to_vec()),
        "quick" => Ok(QUICK.to_vec()),
        list => list
            .split(',')
            .map(|t| match t.trim().parse::<u8>() {
                Ok(i) if ALL.contains(&i) => Ok(i),
                _ => Err(format!("unknown suite entry {t:?}; expected all, quick or numbers 1-11")),
            })
            .collect(),
    }
}

pub fn run_criterion(id: u8) -> CriterionReport {
    let (name, result): (&'static str, Result<CriterionReport>) = match id {
        1 => ("radial oracle", radial_oracle()),
        2 => ("weyl law", weyl_law()),
        3 => ("kernel decay", kernel_decay()),
        4 => ("bulk universality", bulk_universality()),
        5 => ("clt bulk and edge", clt_bulk_edge()),
        6 => ("strong szego", strong_szego()),
        7 => ("edge machinery", edge_machinery()),
        8 => ("gauss bound", gauss_bound()),
        9 => ("decorrelation", decorrelation()),
        10 => ("exact algebra", exact_algebra()),
        11 => ("sampler", sampler()),
        _ => panic!("no criterion {id}"),
    };
    result.unwrap_or_else(|e| CriterionReport::error(id, name, e))
}

fn sci(x: f64) -> String {
    format!("{x:.3e}")
}

/// Every step decreases by more than `noise`.
fn strictly_decreasing(d: &[f64], noise: f64) -> bool {
    d.windows(2).all(|w| w[1] < w[0] - noise)
}

fn grid() -> DropletGrid {
    DropletGrid::default()
}

fn radial_oracle() -> Result<CriterionReport> {
    let v = Potential::ginibre();
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    for n in [8.0, 32.0, 128.0] {
        let sd = build_spectrum(&v, n, 1.0, 0.5, 1.5)?;
        let err = sd.eigenvalues.iter().enumerate().map(|(k, l)| (l - (k + 1) as f64 / n).abs()).fold(0.0, f64::max);
        details.push(format!("N={n} K={} max|lambda_k - (k+1)/N|={}", sd.params.k, sci(err)));
        worst = worst.max(err);
    }
    Ok(CriterionReport { id: 1, name: "radial oracle", pass: worst <= 1e-10, summary: format!("max error {} (tol 1e-10)", sci(worst)), details })
}

fn weyl_law() -> Result<CriterionReport> {
    let ns = [32.0, 64.0, 128.0];
    let mut pass = true;
    let mut summary = Vec::new();
    let mut details = Vec::new();
    for (label, v) in [("ginibre", Potential::ginibre()), ("ellipse t=0.5", Potential::anisotropic(0.5)?)] {
        let ens = Ensemble::new(v, 1.0, 0.5, &grid())?;
        let mut d = Vec::new();
        for n in ns {
            let sd = ens.spectrum(n)?;
            let defect = (sd.weyl_ratio(&ens.droplet) - 1.0).abs();
            details.push(format!("{label} N={n} count={} defect={} bound={}", sd.n_mu, sci(defect), sci(5.0 / n.sqrt())));
            d.push(defect);
        }
        let bounded = d.iter().zip(ns).all(|(d, n)| *d <= 5.0 / n.sqrt());
        // An exact count has nothing left to decrease.
        let decreasing = d.iter().all(|x| *x == 0.0) || strictly_decreasing(&d, 0.0);
        pass &= bounded && decreasing;
        summary.push(format!("{label}: [{}] bounded={bounded} decreasing={decreasing}", d.iter().map(|x| sci(*x)).collect::<Vec<_>>().join(", ")));
    }
    Ok(CriterionReport { id: 2, name: "weyl law", pass, summary: summary.join("; "), details })
}

fn kernel_decay() -> Result<CriterionReport> {
    let ens = Ensemble::new(Potential::ginibre(), 1.0, 0.5, &grid())?;
    let probes = ProbeGrid {
        bulk: (0..=6).flat_map(|i| (0..16).map(move |j| Complex64::from_polar(0.1 * i as f64, 0.3927 * j as f64))).collect(),
        forbidden: (0..64).map(|j| Complex64::from_polar(1.5, std::f64::consts::TAU * j as f64 / 64.0)).collect(),
    };
    let ns = [25.0, 49.0, 100.0, 196.0];
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut details = Vec::new();
    let mut at_100 = f64::NAN;
    for n in ns {
        let sd = ens.spectrum(n)?;
        let r = decay_diagnostics(&KernelField::new(&sd), &probes);
        details.push(format!("N={n} sup_forbidden={} sup_bulk_gap={}", sci(r.sup_forbidden), sci(r.sup_bulk_gap)));
        if n == 100.0 {
            at_100 = r.sup_forbidden;
        }
        xs.push(n.sqrt());
        ys.push(r.sup_forbidden.ln());
    }
    let slope = regression_slope(&xs, &ys);
    let pass = at_100 <= 1e-6 && slope < 0.0;
    Ok(CriterionReport {
        id: 3,
        name: "kernel decay",
        pass,
        summary: format!("sup at r=1.5, N=100: {} (tol 1e-6); slope of log sup vs sqrt N: {:.3}", sci(at_100), slope),
        details,
    })
}

fn regression_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Errors at or below this are roundoff.
const UNIVERSALITY_FLOOR: f64 = 1e-12;

fn bulk_universality() -> Result<CriterionReport> {
    let mut pass = true;
    let mut summary = Vec::new();
    for (label, v) in [("ginibre", Potential::ginibre()), ("ellipse t=0.5", Potential::anisotropic(0.5)?)] {
        let ens = Ensemble::new(v, 1.0, 0.5, &grid())?;
        let err = |n: f64| -> Result<f64> {
            let sd = ens.spectrum(n)?;
            Ok(universality_check(&KernelField::new(&sd), Complex64::new(0.0, 0.0), 2.0, 7))
        };
        let (e32, e128) = (err(32.0)?, err(128.0)?);
        let ok = e128 <= UNIVERSALITY_FLOOR || e128 * 1.5 <= e32;
        pass &= ok;
        summary.push(format!("{label}: N=32 {} N=128 {} ratio {:.2}", sci(e32), sci(e128), e32 / e128));
    }
    Ok(CriterionReport { id: 4, name: "bulk universality", pass, summary: summary.join("; "), details: Vec::new() })
}

/// Changes in Upsilon below this are quadrature roundoff.
const CLT_NOISE: f64 = 1e-9;

/// Stated limit of Upsilon(Re z) for the Ginibre ensemble.
const GINIBRE_RE_Z_TARGET: f64 = 0.375;

fn clt_bulk_edge() -> Result<CriterionReport> {
    let ns = [16.0, 32.0, 64.0, 128.0];
    let f = TestFunction::re_z();
    let mut details = Vec::new();
    let mut sweep = |label: &str, v: Potential, target: Option<f64>| -> Result<(Vec<f64>, f64)> {
        let ens = Ensemble::new(v, 1.0, 0.5, &grid())?;
        let p = predicted_variance(&ens.potential, &ens.droplet, &f, &grid())?;
        let half_sigma = target.unwrap_or(0.5 * p.sigma());
        let bulk_quarter = 0.5 * (p.sigma1 + 0.5 * p.sigma2);
        details.push(format!(
            "{label}: sigma1={} sigma2={} half sigma (flow)={} target={}",
            sci(p.sigma1),
            sci(p.sigma2),
            sci(0.5 * p.sigma()),
            sci(half_sigma)
        ));
        let mut d = Vec::new();
        for n in ns {
            let sd = ens.spectrum(n)?;
            let u = laplace_functional(&Workspace::new(&sd)?, &f)?;
            details.push(format!(
                "{label} N={n} count/N={:.6} upsilon={:.12e} defect={} defect vs (sigma1 + sigma2/2)/2={}",
                sd.n_mu as f64 / n,
                u,
                sci((u - half_sigma).abs()),
                sci((u - bulk_quarter).abs())
            ));
            d.push((u - half_sigma).abs());
        }
        Ok((d, 0.5 * p.sigma()))
    };
    let (g, g_flow) = sweep("ginibre", Potential::ginibre(), Some(GINIBRE_RE_Z_TARGET))?;
    let (e, _) = sweep("ellipse t=0.3", Potential::anisotropic(0.3)?, None)?;
    let g_ok = strictly_decreasing(&g, CLT_NOISE) && g[g.len() - 1] <= 0.05;
    let e_ok = strictly_decreasing(&e, CLT_NOISE);
    details.push(format!("ginibre flow-computed half sigma {} vs stated {GINIBRE_RE_Z_TARGET}", sci(g_flow)));
    Ok(CriterionReport {
        id: 5,
        name: "clt bulk and edge",
        pass: g_ok && e_ok,
        summary: format!(
            "ginibre defects [{}] decreasing and <= 0.05: {g_ok}; ellipse defects [{}] decreasing: {e_ok}",
            g.iter().map(|x| sci(*x)).collect::<Vec<_>>().join(", "),
            e.iter().map(|x| sci(*x)).collect::<Vec<_>>().join(", ")
        ),
        details,
    })
}

fn strong_szego() -> Result<CriterionReport> {
    let f_hat = [Complex64::new(0.5, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.5, 0.0)];
    let r = szego_asymptotics(&f_hat, 256)?;
    let err = (r.szego_constant - 0.25).abs();
    Ok(CriterionReport {
        id: 6,
        name: "strong szego",
        pass: err <= 1e-8,
        summary: format!("n=256 constant {:.12} |err|={} (tol 1e-8)", r.szego_constant, sci(err)),
        details: Vec::new(),
    })
}

fn edge_machinery() -> Result<CriterionReport> {
    let mut details = Vec::new();
    // (a), (b): e^{0.2 Re z} - 1 on the t = 0.5 ellipse, middle half of the window.
    let v = Potential::anisotropic(0.5)?;
    let ens = Ensemble::new(v.clone(), 1.0, 0.5, &grid())?;
    let g = |z: Complex64| (0.2 * z.re).exp_m1();
    let mut cs = Vec::new();
    let mut comms = Vec::new();
    for n in [32.0, 64.0, 128.0] {
        let sd = ens.spectrum(n)?;
        let ew = build_edge_matrices_for(&Workspace::new(&sd)?, &v, &g)?;
        let m = mid_window_defects(&ew, 2.0);
        details.push(format!("(a,b) N={n} window={} c_est={} N||[A,B]||={}", ew.len(), sci(m.c_est), sci(n * m.commutator)));
        cs.push(m.c_est);
        comms.push(n * m.commutator);
    }
    let a_ok = cs.iter().all(|c| *c <= 1.25 * cs[0]);
    let b_ok = comms.iter().all(|c| *c <= 1.25 * comms[0]);

    // (c): compactly supported edge function on the same ellipse, N = 64.
    let t = 0.5;
    let sd = build_spectrum(&v, 64.0, 1.0, 0.95, 1.95 / (1.0f64 - t * t).sqrt())?;
    let ws = Workspace::new(&sd)?;
    let f = TestFunction::product(0.2, vec![Atom::ReZ, Atom::QuadBump { a: 1.0 + t, b: 0.0, c: 1.0 - t, level: 1.0, width: 0.45 }]);
    let ew = build_edge_matrices(&ws, &v, &f)?;
    let cond = edge_conditions_check(&ew);
    let rows = replacement_bound_check(&ew.a, &ew.b, ew.n_pi(), &[0.5, 1.0, 2.0], cond.eps(), cond.c());
    for r in &rows {
        details.push(format!("(c) t={} lhs={} rhs={} (eps={}, C={})", r.t, sci(r.lhs), sci(r.rhs), sci(cond.eps()), sci(cond.c())));
    }
    let c_ok = rows.iter().all(|r| r.holds);

    // (d): Ginibre, 0.3 Re z times a bump around the unit circle.
    let ens = Ensemble::new(Potential::ginibre(), 1.0, 0.9, &grid())?;
    let f = TestFunction::product(0.3, vec![Atom::ReZ, Atom::RadialBump { radius: 1.0, width: 0.2 }]);
    let mut assembly = Vec::new();
    for n in [32.0, 64.0, 128.0] {
        let sd = ens.spectrum(n)?;
        let ws = Workspace::new(&sd)?;
        let ew = build_edge_matrices(&ws, &ens.potential, &f)?;
        let clt = edge_clt(&ws, &ens.potential, &ew, &f, &grid())?;
        details.push(format!(
            "(d) N={n} gamma={} half_sigma1={} trace={} upsilon={} assembly={}",
            sci(clt.gamma),
            sci(clt.half_sigma1),
            sci(clt.trace_term),
            sci(clt.upsilon),
            sci(clt.assembly_defect)
        ));
        assembly.push(clt.assembly_defect.abs());
    }
    let d_ok = assembly[assembly.len() - 1] <= 1e-3;
    Ok(CriterionReport {
        id: 7,
        name: "edge machinery",
        pass: a_ok && b_ok && c_ok && d_ok,
        summary: format!("(a) {a_ok} (b) {b_ok} (c) {c_ok} (d) {d_ok}, assembly at N=128 {}", sci(assembly[2])),
        details,
    })
}

fn gauss_bound() -> Result<CriterionReport> {
    let lambdas: Vec<f64> = (0..=20).map(|i| -1.0 + 0.1 * i as f64).collect();
    let fixtures = [
        ("ginibre, disk bump", Potential::ginibre(), TestFunction::atom(0.5, Atom::DiskBump { center: [0.1, 0.0], radius: 0.5 })),
        ("ellipse t=0.5, 0.5 Re z", Potential::anisotropic(0.5)?, TestFunction::atom(0.5, Atom::ReZ)),
        (
            "ellipse t=0.3, Im z^2 + gauss bump",
            Potential::anisotropic(0.3)?,
            TestFunction::atom(0.3, Atom::ImZ2).plus(&TestFunction::atom(0.4, Atom::GaussBump { center: [0.2, -0.1], width: 0.4 })),
        ),
    ];
    let mut violations = 0;
    let mut details = Vec::new();
    for (label, v, f) in fixtures {
        let ens = Ensemble::new(v, 1.0, 0.5, &grid())?;
        let sd = ens.spectrum(32.0)?;
        let r = gauss_bound_check(&Workspace::new(&sd)?, &f, &lambdas)?;
        details.push(format!("{label}: sigma={} eta={} bound={} max excess={} violations={}", sci(r.sigma), sci(r.eta), sci(r.bound), sci(r.max_violation), r.violations));
        violations += r.violations;
    }
    Ok(CriterionReport { id: 8, name: "gauss bound", pass: violations == 0, summary: format!("{violations} violations over 3 x 21 points"), details })
}

fn decorrelation() -> Result<CriterionReport> {
    let v = Potential::ginibre();
    let f1 = TestFunction::atom(1.0, Atom::DiskBump { center: [-0.45, 0.0], radius: 0.2 });
    let f2 = TestFunction::atom(1.0, Atom::DiskBump { center: [0.45, 0.0], radius: 0.2 });
    let ens = Ensemble::new(v.clone(), 1.0, 0.25, &grid())?;
    let defect = |n: f64| -> Result<f64> {
        let sd = ens.spectrum(n)?;
        decorrelation_defect(&Workspace::new(&sd)?, &v, &f1, &f2)
    };
    let (d32, d128) = (defect(32.0)?, defect(128.0)?);
    Ok(CriterionReport {
        id: 9,
        name: "decorrelation",
        pass: d128 <= 1e-6 && d128 * 10.0 <= d32,
        summary: format!("N=32 {} N=128 {} (tol 1e-6, ratio {:.1})", sci(d32), sci(d128), d32 / d128),
        details: Vec::new(),
    })
}

fn exact_algebra() -> Result<CriterionReport> {
    let v = Potential::anisotropic(0.3)?;
    let d = DropletSpec::new(&v, 1.0, 0.1, &grid())?;
    let cut = Cutoffs::new(&v, 1.0, 0.1);
    let f = TestFunction::re_z()
        .plus(&TestFunction::atom(0.4, Atom::ImZ2))
        .plus(&TestFunction::atom(0.3, Atom::GaussBump { center: [0.2, 0.3], width: 0.5 }));
    let additivity = variance_additivity_check(&v, &d, &f, &cut, &grid())?;

    let sd = build_spectrum(&v, 24.0, 1.0, 0.3, 1.4)?;
    let ws = Workspace::new(&sd)?;
    let u = laplace_functional(&ws, &f)?;
    let shift = (laplace_functional(&ws, &f.clone().plus(&TestFunction::constant(0.8)))? - u).abs();
    let var = variance_linear_statistic(&ws, &f);
    let d2 = upsilon_second_derivative(&ws, &f, 1e-3)?;
    let second = (var - d2).abs() / var;

    let mut gram: f64 = 0.0;
    for (n, k) in [(8.0, 60), (32.0, 120), (128.0, 300)] {
        let q = FockQuadrature::new(FockParams::new(n, k)?, QuadratureSpec::for_truncation(k))?;
        let g = q.real_matrix(&|_| 1.0);
        for a in 0..k {
            for b in 0..k {
                let id = if a == b { 1.0 } else { 0.0 };
                gram = gram.max((g[(a, b)] - id).norm());
            }
        }
    }
    let pass = additivity <= 1e-8 && shift <= 1e-10 && second <= 1e-5 && gram <= 1e-10;
    Ok(CriterionReport {
        id: 10,
        name: "exact algebra",
        pass,
        summary: format!(
            "additivity {} (1e-8), shift {} (1e-10), variance vs d2 upsilon rel {} (1e-5), gram {} (1e-10)",
            sci(additivity),
            sci(shift),
            sci(second),
            sci(gram)
        ),
        details: Vec::new(),
    })
}

pub const SAMPLER_SEED: u64 = 20_240_611;

fn sampler() -> Result<CriterionReport> {
    let sd = build_spectrum(&Potential::ginibre(), 64.0, 1.0, 0.5, 1.5)?;
    let ws = Workspace::new(&sd)?;
    let f = TestFunction::re_z();
    let cfg = SamplerConfig::for_spectrum(&sd, SAMPLER_SEED, 4000)?;
    let samples = sample_many(&sd, &cfg)?;
    let counts_ok = samples.iter().all(|s| s.points.len() == sd.n_mu);
    let stats = empirical_statistics(&samples, &f)?;
    let (mean, var) = (mean_linear_statistic(&ws, &f), variance_linear_statistic(&ws, &f));
    let mean_z = (stats.mean.value - mean) / stats.mean.se;
    let var_z = (stats.variance.value - var) / stats.variance.se;
    let again = sample_many(&sd, &cfg)?;
    let bits = |p: &Complex64| (p.re.to_bits(), p.im.to_bits());
    let rerun_ok = again.len() == samples.len()
        && again.iter().zip(&samples).all(|(a, b)| a.points.iter().map(bits).eq(b.points.iter().map(bits)));
    let pass = counts_ok && mean_z.abs() <= 3.0 && var_z.abs() <= 3.0 && rerun_ok;
    Ok(CriterionReport {
        id: 11,
        name: "sampler",
        pass,
        summary: format!("mean {:.2} SE, variance {:.2} SE off exact; counts {counts_ok}; reruns identical {rerun_ok}", mean_z, var_z),
        details: vec![
            format!("exact mean {} empirical {} +- {}", sci(mean), sci(stats.mean.value), sci(stats.mean.se)),
            format!("exact variance {} empirical {} +- {}", sci(var), sci(stats.variance.value), sci(stats.variance.se)),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_parsing() {
        assert_eq!(parse_suite("all").unwrap().len(), 11);
        assert_eq!(parse_suite("quick").unwrap(), QUICK.to_vec());
        assert_eq!(parse_suite("1, 6,10").unwrap(), vec![1, 6, 10]);
        assert!(parse_suite("12").is_err());
        assert!(parse_suite("x").is_err());
    }

    #[test]
    fn slope_of_a_line() {
        assert!((regression_slope(&[1.0, 2.0, 3.0], &[5.0, 3.0, 1.0]) + 2.0).abs() < 1e-14);
    }
}
