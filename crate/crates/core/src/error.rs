use thiserror::Error;

use crate::train::TrainTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point {value} lies outside [-1, 1]")]
    OutOfRange { value: f64 },

    #[error("invalid basis index {index} (must be within 1..={max})")]
    InvalidIndex { index: usize, max: usize },

    #[error("singular {size}x{size} system (condition estimate {condition:e})")]
    Singular { size: usize, condition: f64 },

    #[error("non-finite value in {what} at point {location:?}")]
    NonFinite { what: &'static str, location: Vec<f64> },

    #[error("rejection sampling failed: {misses} consecutive misses for {domain}")]
    Rejection { misses: usize, domain: String },

    #[error("training aborted at iteration {iteration}: {reason}")]
    TrainingAborted {
        iteration: usize,
        reason: String,
        trace: Box<TrainTrace>,
    },

    #[error("unknown case id {0} (expected 1..=5)")]
    UnknownCase(u32),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
