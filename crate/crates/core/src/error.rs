use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate cloud: all points coincide")]
    DegenerateCloud,
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("non-finite coordinate at point {index}")]
    NonFinite { index: usize },
    #[error("bad k={k} for a cloud of {n} points (valid: {min}..={max})")]
    BadK { k: usize, n: usize, min: usize, max: usize },
    #[error("index {index} out of range for a cloud of {n} points")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("{family} severity {severity} would leave {remaining} points (minimum 32)")]
    TooFewPoints { family: String, severity: u8, remaining: usize },
    #[error("invalid severity {0} (expected 1..=5)")]
    BadSeverity(u8),
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {loss}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("evaluation set is empty")]
    EmptyEval,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("reference error sum is zero for family {0}")]
    ZeroReferenceError(String),
    #[error("configuration error: {0}")]
    BadConfig(String),
    #[error("format error in {path} at byte {offset}: {message}")]
    Format { path: PathBuf, offset: u64, message: String },
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, offset: u64, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), offset, message: message.into() }
    }

    /// Short machine-parsable category used by the command-line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::DegenerateCloud
            | Error::EmptyCloud
            | Error::NonFinite { .. }
            | Error::BadK { .. }
            | Error::IndexOutOfRange { .. } => "geometry",
            Error::TooFewPoints { .. } | Error::BadSeverity(_) => "corruption",
            Error::NonFiniteLoss { .. } => "training",
            Error::EmptyEval | Error::LengthMismatch { .. } | Error::ZeroReferenceError(_) => "metrics",
            Error::BadConfig(_) => "config",
            Error::Format { .. } => "format",
            Error::Io { .. } => "io",
        }
    }
}
