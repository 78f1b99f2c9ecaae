//! Command-line front end: read a JSON run config, run one of the
//! `solve | classify | validate | sweep` commands, write CSV and JSON.
//!
//! Exit codes: 0 success (an `Indeterminate` verdict is a success),
//! 1 configuration error, 2 numeric failure.

pub mod commands;
pub mod config;
pub mod format;

use thiserror::Error;

pub use commands::{run, Command, Overrides};
pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 1,
            CliError::Numeric(_) => 2,
        }
    }
}
