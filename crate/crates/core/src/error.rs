use thiserror::Error;

/// Errors raised by problem evaluation, the estimators and the optimizers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("component {index} out of range (outer family has {size} components)")]
    ComponentOutOfRange { index: usize, size: usize },

    #[error(
        "inner index {index} out of range for component {component} (family has {size} members)"
    )]
    InnerOutOfRange {
        component: usize,
        index: usize,
        size: usize,
    },

    #[error("{0} requires a finite, enumerable family")]
    NotEnumerable(&'static str),

    #[error("non-finite value produced at level {level} for component {component}")]
    NonFinite { level: u32, component: usize },

    #[error("sampled level {level} needs more than 2^{max_log2} inner draws")]
    LevelTooDeep { level: u32, max_log2: u32 },

    #[error("mismatched batch counts: {0}")]
    MismatchedCounts(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("censoring calibration failed: {0}")]
    Calibration(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
