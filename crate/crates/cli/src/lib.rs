//! Experiment driver for `fockdpp`: JSON configs in, CSV tables and provenance sidecars out.

pub mod commands;
pub mod config;
pub mod verify;

pub use commands::{run, Command, RunError};
pub use config::{ConfigError, ExperimentConfig};
