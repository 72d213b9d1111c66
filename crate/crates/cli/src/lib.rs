//! Command-line experiments for four-party quantum secret sharing:
//! coincidence histograms, correlation scans with visibility fits, full
//! secret-sharing sessions and Bell tests.

pub mod commands;
pub mod config;
pub mod fit;

use std::io;

use thiserror::Error;

pub use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("session aborted: {0}")]
    Aborted(String),
    #[error("insufficient statistics: {0}")]
    Insufficient(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    /// Process exit status: 2 config, 3 abort, 4 insufficient statistics,
    /// 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Aborted(_) => 3,
            CliError::Insufficient(_) => 4,
            CliError::Io(_) | CliError::Failed(_) => 1,
        }
    }

    /// The message without the category prefix.
    pub fn message(&self) -> String {
        match self {
            CliError::Config(m) | CliError::Aborted(m) | CliError::Insufficient(m) | CliError::Failed(m) => m.clone(),
            CliError::Io(e) => e.to_string(),
        }
    }
}
