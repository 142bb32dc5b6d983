//! Experiment drivers behind the `sqlab` command: risk sweeps, coverage
//! certificates, threshold calibration, the verification suite and the proximal
//! gradient demo.

pub mod calibrate;
pub mod config;
pub mod coverage;
pub mod demo;
pub mod setup;
pub mod sweep;
pub mod verify;

use sqlab_core::exec::Exec;
use thiserror::Error;

pub use config::{DetectorKind, ExperimentConfig, ModelKind, OracleKind, Overrides, SigmaSpec};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    /// A check ran and came out negative.
    #[error("{0}")]
    Negative(String),
    #[error(transparent)]
    Core(#[from] sqlab_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    /// 1 for a checked negative, 2 for usage and configuration errors, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        use sqlab_core::Error as E;
        match self {
            CliError::Negative(_) | CliError::Core(E::Divergence(_)) => 1,
            CliError::Usage(_) | CliError::Core(E::Domain(_) | E::CapExceeded { .. }) => 2,
            _ => 3,
        }
    }
}

/// Execution mode for a thread count (`None` means all cores).
pub fn exec_for(threads: Option<usize>) -> Exec {
    match threads {
        Some(1) => Exec::Sequential,
        _ => Exec::Parallel,
    }
}
