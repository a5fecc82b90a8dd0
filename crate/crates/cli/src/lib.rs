//! Configuration-driven harness around `mlp-core`: single evaluations,
//! convergence sweeps, complexity fits and the verification suite.

pub mod commands;
pub mod config;
pub mod output;

use mlp_core::MlpError;
use thiserror::Error;

pub use commands::{cmd_complexity, cmd_converge, cmd_run, cmd_verify, Context};
pub use config::RunConfig;

#[derive(Debug, Error, Clone)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Eval(#[from] MlpError),
    #[error("i/o: {0}")]
    Io(String),
    #[error("failed checks: {}", .0.join(", "))]
    VerifyFailed(Vec<String>),
}

impl CliError {
    /// 1 for failed checks, 2 for bad input, 3 for evaluation faults, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::VerifyFailed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Eval(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}
