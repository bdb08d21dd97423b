use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the identification library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("timestamps must be strictly increasing (t[{index}] = {value} after {previous})")]
    NonMonotoneTimestamps {
        index: usize,
        previous: f64,
        value: f64,
    },

    #[error("at least {min} samples are required, got {found}")]
    TooFewSamples { min: usize, found: usize },

    #[error("mode label {label} at index {index} is outside 1..={modes}")]
    ModeOutOfRange {
        label: usize,
        index: usize,
        modes: usize,
    },

    #[error("index {index} out of range (valid: 0..={max})")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("state diverged (non-finite value) at sample {index}")]
    Divergence { index: usize },

    #[error("non-finite cost after {step} in iteration {iteration}")]
    NonFiniteCost { step: &'static str, iteration: usize },

    #[error("output channel {channel} is constant; best fit rate is undefined")]
    ConstantSignal { channel: usize },

    #[error("{path}: row {row}, column {column}: {message}")]
    Csv {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: malformed header: {message}")]
    MalformedHeader { path: PathBuf, message: String },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn dims(what: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            what: what.into(),
            expected,
            found,
        }
    }
}
