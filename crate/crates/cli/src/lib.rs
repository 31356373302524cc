//! Library side of the `d2lab` command: configuration, seeded experiment
//! orchestration and result files.

pub mod config;
pub mod experiment;

use std::fmt;

pub use config::{load_config, parse_config, ExperimentConfig, Method};

/// Failures split by exit status: configuration and usage problems exit 2,
/// failed properties and experiments exit 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Failure(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<d2lab_core::Error> for CliError {
    fn from(e: d2lab_core::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}
