//! File formats, configuration and parallel execution for `cdf-core`.
//!
//! The `cdf` binary is a thin wrapper over [`experiment::run`] and
//! [`experiment::replay`].

use std::io;
use std::path::PathBuf;

use cdf_core::ScenarioError;
use thiserror::Error;

pub mod config;
pub mod experiment;
pub mod format;
pub mod output;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed episode log: {0}")]
    Log(String),
    #[error("simulation: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("seed {0} is not in the episode log")]
    UnknownSeed(u64),
    #[error("replay of seed {seed} disagrees with the log on {field}")]
    ReplayMismatch { seed: u64, field: &'static str },
    #[error("{anomalous} of {total} episodes timed out (limit {limit})")]
    TooManyAnomalous { anomalous: u32, total: u32, limit: f64 },
    #[error("thread pool: {0}")]
    Pool(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// 2 for the anomaly gate, 3 for a replay that diverges, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::TooManyAnomalous { .. } => 2,
            CliError::ReplayMismatch { .. } => 3,
            _ => 1,
        }
    }
}
