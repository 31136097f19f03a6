//! Subcommand runners. Each writes CSV tables into the output directory and finishes with a
//! `<command>.provenance.json` sidecar listing the config hash, seed, version and artifact digests.

use std::path::{Path, PathBuf};

use fockdpp::flow::{fourier_along_flow, level_curve};
use fockdpp::fock::C_TRUNC;
use fockdpp::operator::{build_spectrum_with, decay_diagnostics, ProbeGrid};
use fockdpp::potential::bounding_radius;
use fockdpp::sampler::{empirical_statistics, points_csv, sample_many, EmpiricalStatistics};
use fockdpp::statistic::{
    laplace_functional, mean_linear_statistic, predicted_variance, upsilon_scaled, upsilon_second_derivative,
    variance_linear_statistic,
};
use fockdpp::toeplitz::{
    build_edge_matrices, edge_clt, edge_conditions_check, edge_csv, replacement_bound_check, szego_asymptotics,
    toeplitz_defect, EdgeRow,
};
use fockdpp::{Complex64, Ensemble, FockParams, QuadratureSpec, SamplerConfig, SpectralData, Workspace};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{hex, ExperimentConfig};
use crate::verify::{parse_suite, run_criterion, KNOWN_UNATTAINABLE};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    Decay,
    Flow,
    Predict,
    Laplace,
    CltSweep,
    Edge,
    Szego,
    Sample,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Decay => "decay",
            Command::Flow => "flow",
            Command::Predict => "predict",
            Command::Laplace => "laplace",
            Command::CltSweep => "clt-sweep",
            Command::Edge => "edge",
            Command::Szego => "szego",
            Command::Sample => "sample",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug)]
pub enum RunError {
    /// Bad config or flags; exit code 2.
    Usage(String),
    /// Numerical or I/O failure; exit code 1.
    Failed(String),
    /// The verify suite ran and some criteria failed; exit code 1.
    SuiteFailed(Vec<u8>),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => 2,
            RunError::Failed(_) | RunError::SuiteFailed(_) => 1,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Usage(s) | RunError::Failed(s) => f.write_str(s),
            RunError::SuiteFailed(ids) => write!(f, "failed criteria: {ids:?}"),
        }
    }
}

impl From<fockdpp::Error> for RunError {
    fn from(e: fockdpp::Error) -> Self {
        RunError::Failed(e.to_string())
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Failed(e.to_string())
    }
}

type Run<T> = std::result::Result<T, RunError>;

#[derive(Serialize)]
struct ArtifactRecord {
    file: String,
    sha256: String,
}

#[derive(Serialize)]
struct Provenance<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config_hash: String,
    seed: u64,
    config: &'a ExperimentConfig,
    artifacts: Vec<ArtifactRecord>,
}

/// Collects artifact files written by one subcommand.
struct Artifacts {
    dir: PathBuf,
    records: Vec<ArtifactRecord>,
}

impl Artifacts {
    fn new(dir: &Path) -> Run<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), records: Vec::new() })
    }

    fn write(&mut self, name: &str, body: &str) -> Run<()> {
        std::fs::write(self.dir.join(name), body)?;
        self.records.push(ArtifactRecord { file: name.into(), sha256: hex(&Sha256::digest(body.as_bytes())) });
        Ok(())
    }

    fn finish(self, command: Command, cfg: &ExperimentConfig) -> Run<()> {
        let p = Provenance {
            tool: "fockdpp",
            version: env!("CARGO_PKG_VERSION"),
            command: command.name(),
            config_hash: cfg.hash(),
            seed: cfg.sampler.seed,
            config: cfg,
            artifacts: self.records,
        };
        let body = serde_json::to_string_pretty(&p).map_err(|e| RunError::Failed(e.to_string()))?;
        std::fs::write(self.dir.join(format!("{}.provenance.json", command.name())), body + "\n")?;
        Ok(())
    }
}

fn e(x: f64) -> String {
    format!("{x:.16e}")
}

fn row(vals: &[String]) -> String {
    let mut s = vals.join(",");
    s.push('\n');
    s
}

/// Label for N in file names: integral values print without a fraction.
fn n_label(n: f64) -> String {
    if n.fract() == 0.0 {
        format!("{}", n as u64)
    } else {
        format!("{n}")
    }
}

fn ensemble(cfg: &ExperimentConfig) -> Run<Ensemble> {
    Ok(Ensemble::new(cfg.potential.build()?, cfg.mu, cfg.delta, &cfg.droplet_grid)?)
}

/// Spectrum at N with the config's truncation and quadrature overrides.
fn spectrum(cfg: &ExperimentConfig, ens: &Ensemble, n: f64) -> Run<SpectralData> {
    let q = &cfg.quadrature;
    let params = FockParams::for_action(n, ens.action_upper, q.c_trunc.unwrap_or(C_TRUNC))?;
    let mut spec = QuadratureSpec::for_truncation(params.k);
    spec.n_r = q.n_r.unwrap_or(spec.n_r);
    spec.n_theta = q.n_theta.unwrap_or(spec.n_theta);
    spec.t_max = q.t_max.unwrap_or(spec.t_max);
    let sd = build_spectrum_with(&ens.potential, params, spec, cfg.mu, cfg.delta)?;
    if !sd.close_pairs.is_empty() {
        eprintln!("warning: N = {n}: {} near-degenerate eigenvalue pairs in the window at {:?}", sd.close_pairs.len(), sd.close_pairs);
    }
    Ok(sd)
}

/// Runs one subcommand with a fully resolved config.
pub fn run(command: Command, cfg: &ExperimentConfig) -> Run<()> {
    let mut art = Artifacts::new(&cfg.output)?;
    match command {
        Command::Spectrum => spectrum_cmd(cfg, &mut art)?,
        Command::Decay => decay_cmd(cfg, &mut art)?,
        Command::Flow => flow_cmd(cfg, &mut art)?,
        Command::Predict => predict_cmd(cfg, &mut art)?,
        Command::Laplace => laplace_cmd(cfg, &mut art)?,
        Command::CltSweep => clt_cmd(cfg, &mut art)?,
        Command::Edge => edge_cmd(cfg, &mut art)?,
        Command::Szego => szego_cmd(cfg, &mut art)?,
        Command::Sample => sample_cmd(cfg, &mut art)?,
        Command::Verify => {
            let failed = verify_cmd(cfg, &mut art)?;
            art.finish(command, cfg)?;
            return if failed.is_empty() { Ok(()) } else { Err(RunError::SuiteFailed(failed)) };
        }
    }
    art.finish(command, cfg)
}

fn spectrum_cmd(cfg: &ExperimentConfig, art: &mut Artifacts) -> Run<()> {
    let ens = ensemble(cfg)?;
    let mut eig = String::from("n,index,eigenvalue\n");
    let mut summary = String::from("n,k,n_mu,weyl_ratio,unitarity_defect,close_pairs\n");
    for &n in &cfg.n {
        let sd = spectrum(cfg, &ens, n)?;
        for (k, l) in sd.eigenvalues.iter().enumerate() {
            eig.push_str(&row(&[e(n), k.to_string(), e(*l)]));
        }
        summary.push_str(&row(&[
            e(n),
            sd.params.k.to_string(),
            sd.n_mu.to_string(),
            e(sd.weyl_ratio(&ens.droplet)),
            e(sd.unitarity_defect()),
            sd.close_pairs.len().to_string(),
        ]));
    }
    art.write("spectrum.csv", &eig)?;
    art.write("spectrum_summary.csv", &summary)
}

fn decay_cmd(cfg: &ExperimentConfig, art: &mut Artifacts) -> Run<()> {
    let ens = ensemble(cfg)?;
    let r_max = cfg.decay.r_factor * bounding_radius(&ens.potential, cfg.mu + cfg.delta, cfg.droplet_grid.r_limit)?;
    let probes = ProbeGrid::polar(&ens.potential, &ens.droplet, r_max, cfg.decay.n_r, cfg.decay.n_theta);
    let mut s = String::from("n,k,n_mu,sup_forbidden,sup_bulk_gap,bulk_probes,forbidden_probes\n");
    for &n in &cfg.n {
        let sd = spectrum(cfg, &ens, n)?;
        let r = decay_diagnostics(&fockdpp::KernelField::new(&sd), &probes);
        s.push_str(&row(&[
            e(n),
            sd.params.k.to_string(),
            sd.n_mu.to_string(),
            e(r.sup_forbidden),
            e(r.sup_bulk_gap),
            probes.bulk.len().to_string(),
            probes.forbidden.len().to_string(),
        ]));
    }
    art.write("decay.csv", &s)
}

fn flow_cmd(cfg: &ExperimentConfig, art: &mut Artifacts) -> Run<()> {
    let v = cfg.potential.build()?;
    let curve = level_curve(&v, cfg.mu, &cfg.flow)?;
    let k_max = cfg.flow.samples.saturating_sub(8) / 4;
    let fc = fourier_along_flow(&curve, &|z| fockdpp::ScalarField::value(&cfg.f, z), k_max)?;
    art.write("flow_curve.csv", &curve.to_csv(&v))?;
    let mut four = String::from("k,re,im\n");
    for k in -(k_max as i64)..=k_max as i64 {
        let c = fc.get(k);
        four.push_str(&row(&[k.to_string(), e(c.re), e(c.im)]));
    }
    art.write("flow_fourier.csv", &four)?;
    let mut s = String::from("mu,period,closure_error,energy_drift,enclosed_action,sigma1,tail\n");
    s.push_str(&row(&[
        e(cfg.mu),
        e(curve.period),
        e(curve.closure_error),
        e(curve.energy_drift(&v)),
        e(curve.enclosed_action()),
        e(fc.sigma1()),
        e(fc.tail()),
    ]));
    art.write("flow_summary.csv", &s)
}

fn predict_cmd(cfg: &ExperimentConfig, art: &mut Artifacts) -> Run<()> {
    let ens = ensemble(cfg)?;
    let p = predicted_variance(&ens.potential, &ens.droplet, &cfg.f, &cfg.droplet_grid)?;
    let mut s = String::from("mu,area_gamma,sigma1,sigma2,sigma\n");
    s.push_str(&row(&[e(cfg.mu), e(ens.droplet.area_gamma), e(p.sigma1), e(p.sigma2), e(p.sigma())]));
    art.write("predict.csv", &s)
}

fn laplace_cmd(cfg: &ExperimentConfig, art: &mut Artifacts) -> Run<()> {
    let ens = ensemble(cfg)?;
    let mut table = String::from("n,lambda,upsilon,quadratic\n");
    let mut summary = String::from("n,k,n_mu,mean,variance,upsilon_second_derivative\n");
    for &n in &cfg.n {
        let sd = spectrum(cfg, &ens, n)?;
        let ws = Workspace::new(&sd)?;
        let var = variance_linear_statistic(&ws, &cfg.f);
        for &l in &cfg.laplace.lambdas {
            table.push_str(&row(&[e(n), e(l), e(upsilon_scaled(&ws, &cfg.f, l)?), e(0.5 * l * l * var)]));
        }
        summary.push_str(&row(&[
            e(n),
            sd.params.k.to_string(),
            sd.n_mu.to_string(),
            e(mean_linear_statistic(&ws, &cfg.f)),
            e(var),
            e(upsilon_second_derivative(&ws, &cfg.f, 1e-3)?),
        ]));
    }
    art.write("laplace.csv", &table)?;
    art.write("laplace_summary.csv", &summary)
}

fn clt_cmd(cfg: &ExperimentConfig, art: &mut Artifacts) -> Run<()> {
    let ens = ensemble(cfg)?;
    let p = predicted_variance(&ens.potential, &ens.droplet, &cfg.f, &cfg.droplet_grid)?;
    let half = 0.5 * p.sigma();
    let mut s = String::from("n,k,n_mu,upsilon,half_sigma,defect\n");
    for &n in &cfg.n {
        let sd = spectrum(cfg, &ens, n)?;
        let u = laplace_functional(&Workspace::new(&sd)?, &cfg.f)?;
        s.push_str(&row(&[e(n), sd.params.k.to_string(), sd.n_mu.to_string(), e(u), e(half), e((u - half).abs())]));
    }
    art.write("clt.csv", &s)
}

fn edge_cmd(cfg: &ExperimentConfig, art: &mut Artifacts) -> Run<()> {
    let ens = ensemble(cfg)?;
    let mut rows = Vec::new();
    for &n in &cfg.n {
        let sd = spectrum(cfg, &ens, n)?;
        let ws = Workspace::new(&sd)?;
        let ew = build_edge_matrices(&ws, &ens.potential, &cfg.f)?;
        let conditions = edge_conditions_check(&ew);
        let replacement = replacement_bound_check(&ew.a, &ew.b, ew.n_pi(), &cfg.edge.ts, conditions.eps(), conditions.c());
        rows.push(EdgeRow {
            n,
            window: ew.len(),
            n_pi: ew.n_pi(),
            defect_c: toeplitz_defect(&ew, cfg.edge.kappa).c_est,
            replacement,
            clt: edge_clt(&ws, &ens.potential, &ew, &cfg.f, &cfg.droplet_grid)?,
            conditions,
        });
    }
    art.write("edge.csv", &edge_csv(&rows))?;
    let mut rep = String::from("n,t,lhs,rhs,holds\n");
    for r in &rows {
        for x in &r.replacement {
            rep.push_str(&row(&[e(r.n), e(x.t), e(x.lhs), e(x.rhs), x.holds.to_string()]));
        }
    }
    art.write("edge_replacement.csv", &rep)
}

fn szego_cmd(cfg: &ExperimentConfig, art: &mut Artifacts) -> Run<()> {
    let f_hat: Vec<Complex64> = cfg.szego.f_hat.iter().map(|c| Complex64::new(c[0], c[1])).collect();
    let mut s = String::from("n,logdet,first_order,szego_constant,predicted\n");
    for &n in &cfg.szego.n {
        let r = szego_asymptotics(&f_hat, n)?;
        s.push_str(&row(&[n.to_string(), e(r.logdet), e(r.first_order), e(r.szego_constant), e(r.predicted)]));
    }
    art.write("szego.csv", &s)
}

fn sample_cmd(cfg: &ExperimentConfig, art: &mut Artifacts) -> Run<()> {
    let ens = ensemble(cfg)?;
    let mut stats = Vec::new();
    let mut s = String::from("n,n_mu,n_samples,proposal_radius,exact_mean,mean,mean_se,exact_variance,variance,variance_se,skewness,kurtosis\n");
    for &n in &cfg.n {
        let sd = spectrum(cfg, &ens, n)?;
        let mut sc = SamplerConfig::for_spectrum(&sd, cfg.sampler.seed, cfg.sampler.n_samples)?;
        if let Some(m) = cfg.sampler.max_rejections {
            sc.max_rejections = m;
        }
        let samples = sample_many(&sd, &sc)?;
        art.write(&format!("points_n{}.csv", n_label(n)), &points_csv(&samples))?;
        let ws = Workspace::new(&sd)?;
        let st = empirical_statistics(&samples, &cfg.f)?;
        s.push_str(&row(&[
            e(n),
            sd.n_mu.to_string(),
            samples.len().to_string(),
            e(sc.proposal_radius),
            e(mean_linear_statistic(&ws, &cfg.f)),
            e(st.mean.value),
            e(st.mean.se),
            e(variance_linear_statistic(&ws, &cfg.f)),
            e(st.variance.value),
            e(st.variance.se),
            e(st.skewness.value),
            e(st.kurtosis.value),
        ]));
        stats.push(SampleSummary { n, n_mu: sd.n_mu, proposal_radius: sc.proposal_radius, statistics: st });
    }
    art.write("sample_stats.csv", &s)?;
    let json = serde_json::to_string_pretty(&stats).map_err(|e| RunError::Failed(e.to_string()))?;
    art.write("sample_stats.json", &(json + "\n"))
}

#[derive(Serialize)]
struct SampleSummary {
    n: f64,
    n_mu: usize,
    proposal_radius: f64,
    statistics: EmpiricalStatistics,
}

/// Runs the selected criteria, printing one line each. Returns the failing ids.
fn verify_cmd(cfg: &ExperimentConfig, art: &mut Artifacts) -> Run<Vec<u8>> {
    let ids = parse_suite(&cfg.suite).map_err(RunError::Usage)?;
    let mut s = String::from("criterion,status,name,summary\n");
    let mut failed = Vec::new();
    for id in ids {
        let r = run_criterion(id);
        println!("{}", r.line());
        for d in &r.details {
            println!("    {d}");
        }
        if !r.pass {
            if KNOWN_UNATTAINABLE.contains(&id) {
                println!("    criterion {id} is known to be unattainable as stated");
            }
            failed.push(id);
        }
        s.push_str(&format!("{},{},{},\"{}\"\n", id, if r.pass { "PASS" } else { "FAIL" }, r.name, r.summary.replace('"', "'")));
    }
    art.write("verify.csv", &s)?;
    Ok(failed)
}
