use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fockdpp_cli::{run, Command, ConfigError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "fockdpp", version, about = "Spectral projectors on the Fock space and their point processes")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Sampler seed; overrides `sampler.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the numerical kernels.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Verification suite: `all`, `quick`, or criterion numbers such as `1,6,10`.
    #[arg(long, global = true)]
    suite: Option<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Eigenvalues, occupation count and Weyl ratio.
    Spectrum,
    /// Kernel density in the forbidden region and the bulk.
    Decay,
    /// Level curve, period and Fourier table of f along the flow.
    Flow,
    /// Boundary and bulk variance predictions.
    Predict,
    /// Log-Laplace functional on a lambda grid.
    Laplace,
    /// Log-Laplace functional against the predicted limit across N.
    CltSweep,
    /// Edge window matrices, conditions, replacement bound and assembly.
    Edge,
    /// Toeplitz determinants against the strong Szego limit.
    Szego,
    /// Point configurations and empirical statistics.
    Sample,
    /// Acceptance suite with one PASS/FAIL line per criterion.
    Verify,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Spectrum => Command::Spectrum,
            Cmd::Decay => Command::Decay,
            Cmd::Flow => Command::Flow,
            Cmd::Predict => Command::Predict,
            Cmd::Laplace => Command::Laplace,
            Cmd::CltSweep => Command::CltSweep,
            Cmd::Edge => Command::Edge,
            Cmd::Szego => Command::Szego,
            Cmd::Sample => Command::Sample,
            Cmd::Verify => Command::Verify,
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None if matches!(cli.command, Cmd::Verify | Cmd::Szego) => ExperimentConfig::from_json(r#"{"potential": {"family": "radial", "profile": "t"}, "mu": 1.0}"#)?,
        None => return Err(ConfigError::Invalid("--config is required for this subcommand".into())),
    };
    if let Some(o) = &cli.out {
        cfg.output = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.sampler.seed = s;
    }
    if let Some(s) = &cli.suite {
        cfg.suite = s.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot configure {t} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command.into(), &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
