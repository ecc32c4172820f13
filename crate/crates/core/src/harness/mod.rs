//! Monte Carlo harness: configuration, ensembles, CSV files and the CLI.

pub mod cli;
pub mod config;
pub mod ensemble;
pub mod export;

pub use config::{
    BarrierChainConfig, BenchmarkId, CertificationConfig, EnsembleConfig, LyapunovChainConfig,
};
pub use ensemble::{
    car_controller, ensemble_stats, pendulum_controller, run_ensemble, safety_rate, ColumnLayout,
    Ensemble, EnsembleStats, TrajectorySummary,
};
pub use export::{export_csv, read_trajectories, TrajectoryFile};

use thiserror::Error;

use crate::chain::ChainError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("chain construction failed: {0}")]
    Chain(#[from] ChainError),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl HarnessError {
    /// 1 for invalid input, 2 for failures while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config(_) | HarnessError::Chain(_) => 1,
            HarnessError::Io(_) | HarnessError::Runtime(_) => 2,
        }
    }
}
