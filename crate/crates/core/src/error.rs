use std::io;

use crate::metric::Metric;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("metric {metric} cannot be used with {kind} data")]
    MetricMismatch { metric: Metric, kind: &'static str },

    #[error("vertex sets overlap at id {0}")]
    OverlappingSets(u32),

    #[error("vertex id {id} out of range for dataset of {n} records")]
    IdOutOfRange { id: u32, n: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
