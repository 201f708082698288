//! Benchmark harness: JSON-configured optimizer runs, estimator diagnostics and self-checks.

pub mod config;
pub mod estimate;
pub mod instance;
pub mod output;
pub mod run;
pub mod selftest;

pub use config::BenchConfig;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] simgrad_core::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Process exit status for each failure class.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const DIVERGED: i32 = 3;
}

impl BenchError {
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => exit::CONFIG,
            BenchError::Core(
                simgrad_core::Error::NonFinite { .. } | simgrad_core::Error::LevelTooDeep { .. },
            ) => exit::DIVERGED,
            _ => exit::FAILURE,
        }
    }
}
