//! Config-driven experiments for the `renewal-dpp` library.

pub mod config;
pub mod experiment;

use std::path::{Path, PathBuf};

pub use config::{parse_config, ConfigError, ConfigErrors, ExperimentConfig};
pub use experiment::{run_experiment, ExperimentReport};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigErrors),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Runtime(#[from] renewal_dpp::Error),
    #[error("{0} check violation(s)")]
    CheckFailed(u64),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io { .. } | CliError::Csv(_) | CliError::Runtime(_) => 2,
            CliError::CheckFailed(_) => 3,
        }
    }
}

/// Reads and parses a config file. An unreadable file is a config error.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Config(ConfigErrors(vec![ConfigError {
            line: 0,
            key: None,
            reason: format!("cannot read {}: {e}", path.display()),
        }]))
    })?;
    Ok(parse_config(&text)?)
}
