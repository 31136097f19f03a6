//! Experiment configuration. Every field except the potential and the Fermi level has a default,
//! and the resolved config (defaults filled in) is what gets hashed into the provenance record.

use std::path::{Path, PathBuf};

use fockdpp::flow::FlowOptions;
use fockdpp::{DropletGrid, PotentialSpec, TestFunction};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub potential: PotentialSpec,
    pub mu: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_ns")]
    pub n: Vec<f64>,
    #[serde(default = "default_f")]
    pub f: TestFunction,
    #[serde(default)]
    pub quadrature: QuadratureOverrides,
    #[serde(default)]
    pub droplet_grid: DropletGrid,
    #[serde(default)]
    pub flow: FlowOptions,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub decay: DecaySection,
    #[serde(default)]
    pub laplace: LaplaceSection,
    #[serde(default)]
    pub edge: EdgeSection,
    #[serde(default)]
    pub szego: SzegoSection,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_suite")]
    pub suite: String,
}

fn default_delta() -> f64 {
    0.5
}

fn default_ns() -> Vec<f64> {
    vec![16.0, 32.0, 64.0]
}

fn default_f() -> TestFunction {
    TestFunction::re_z()
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_suite() -> String {
    "all".into()
}

/// Optional replacements for the automatic truncation and quadrature choices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureOverrides {
    /// Ratio K / (N I(mu + delta)).
    pub c_trunc: Option<f64>,
    pub n_r: Option<usize>,
    pub n_theta: Option<usize>,
    pub t_max: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub seed: u64,
    pub n_samples: usize,
    pub max_rejections: Option<usize>,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self { seed: 1, n_samples: 1000, max_rejections: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecaySection {
    /// Probe lattice radius as a multiple of the bounding radius of {V < mu + delta}.
    pub r_factor: f64,
    pub n_r: usize,
    pub n_theta: usize,
}

impl Default for DecaySection {
    fn default() -> Self {
        Self { r_factor: 1.5, n_r: 48, n_theta: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LaplaceSection {
    pub lambdas: Vec<f64>,
}

impl Default for LaplaceSection {
    fn default() -> Self {
        Self { lambdas: (0..=20).map(|i| -1.0 + 0.1 * i as f64).collect() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EdgeSection {
    pub ts: Vec<f64>,
    pub kappa: f64,
}

impl Default for EdgeSection {
    fn default() -> Self {
        Self { ts: vec![0.5, 1.0, 2.0], kappa: 2.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SzegoSection {
    /// Fourier coefficients f_{-m}..f_m as [re, im] pairs.
    pub f_hat: Vec<[f64; 2]>,
    pub n: Vec<usize>,
}

impl Default for SzegoSection {
    fn default() -> Self {
        Self { f_hat: vec![[0.5, 0.0], [0.0, 0.0], [0.5, 0.0]], n: vec![16, 32, 64, 128, 256] }
    }
}

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    Schema(serde_json::Error),
    Invalid(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "cannot read config: {e}"),
            ConfigError::Schema(e) => write!(f, "config schema error: {e}"),
            ConfigError::Invalid(s) => write!(f, "invalid config: {s}"),
        }
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(ConfigError::Schema)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path).map_err(ConfigError::Io)?)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if !(self.delta > 0.0) {
            return Err(ConfigError::Invalid(format!("delta must be positive, got {}", self.delta)));
        }
        if self.n.is_empty() || self.n.iter().any(|n| !(*n >= 1.0)) {
            return Err(ConfigError::Invalid("n must be a non-empty list of values >= 1".into()));
        }
        if self.szego.f_hat.len() % 2 == 0 {
            return Err(ConfigError::Invalid("szego.f_hat must have odd length".into()));
        }
        self.potential.build().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Canonical JSON of the resolved config.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON with the output directory blanked, so that the same
    /// experiment written to different places hashes the same.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = PathBuf::new();
        hex(&Sha256::digest(c.canonical_json().as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_filled_in() {
        let c = ExperimentConfig::from_json(r#"{"potential": {"family": "radial", "profile": "t"}, "mu": 1.0}"#).unwrap();
        assert_eq!(c.delta, 0.5);
        assert_eq!(c.suite, "all");
        assert_eq!(c.laplace.lambdas.len(), 21);
        let again = ExperimentConfig::from_json(&c.canonical_json()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.hash(), c.hash());
        let mut moved = c.clone();
        moved.output = PathBuf::from("elsewhere");
        assert_eq!(moved.hash(), c.hash());
        moved.mu = 1.1;
        assert_ne!(moved.hash(), c.hash());
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        let base = r#"{"potential": {"family": "radial", "profile": "t"}, "mu": 1.0"#;
        assert!(matches!(ExperimentConfig::from_json(&format!("{base}, \"bogus\": 1}}")), Err(ConfigError::Schema(_))));
        assert!(matches!(ExperimentConfig::from_json(&format!("{base}, \"sampler\": {{\"seeds\": 2}}}}")), Err(ConfigError::Schema(_))));
        assert!(matches!(ExperimentConfig::from_json(&format!("{base}, \"delta\": -1}}")), Err(ConfigError::Invalid(_))));
        assert!(matches!(ExperimentConfig::from_json(&format!("{base}, \"n\": []}}")), Err(ConfigError::Invalid(_))));
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"potential": {"family": "aniso", "t": 1.5}, "mu": 1.0}"#),
            Err(ConfigError::Invalid(_))
        ));
    }
}
