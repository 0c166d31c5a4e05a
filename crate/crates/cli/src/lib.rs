//! The `roadsense` operator tool.
//!
//! Subcommands cover the package lifecycle: `simulate` writes synthetic
//! packages, `upload` / `pull` move them through a sync server started with
//! `serve`, `status` and `validate` inspect the local library, `query` does
//! timestamp lookups, and `analyze` turns one package into static report
//! files (see [`report`]).
//!
//! Exit codes: 0 success, 1 validation failure, 2 argument error, 3 I/O,
//! 4 network.

use thiserror::Error;

pub mod analysis;
pub mod commands;
pub mod config;
pub mod report;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CliError {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("I/O: {0}")]
    Io(String),
    #[error("network: {0}")]
    Network(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Argument(_) => 2,
            CliError::Io(_) => 3,
            CliError::Network(_) => 4,
        }
    }
}
