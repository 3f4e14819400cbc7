//! Front end for urnflow experiments: configuration files, the
//! `simulate`/`ode`/`ensemble`/`analyze` commands, CSV and SVG output, and
//! the acceptance checks behind `verify`.

#![allow(clippy::needless_range_loop)]

pub mod commands;
pub mod config;
pub mod output;
pub mod verify;

use urnflow::UrnError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("verification failed: {}", .0.join(", "))]
    VerificationFailed(Vec<String>),
}

impl CliError {
    pub fn config(e: UrnError) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn runtime(e: UrnError) -> Self {
        CliError::Runtime(e.to_string())
    }

    /// 1 verification failure, 2 config error, 3 runtime error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::VerificationFailed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Runtime(_) | CliError::Io(_) => 3,
        }
    }
}
