//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Matrix/vector dimensions incompatible with the requested operation.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Invalid argument value (out-of-range rate, zero clusters, ...).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Malformed input data; carries the byte offset or line number.
    #[error("format error in {path} at {position}: {detail}")]
    Format {
        path: String,
        position: String,
        detail: String,
    },

    /// A cluster's soft frequency collapsed to zero.
    #[error("degenerate cluster: {0}")]
    DegenerateCluster(String),

    /// Dataset unusable (e.g. all-zero features cannot be normalized).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// Non-finite values or otherwise failed numerical procedure.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Bad run configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn format(
        path: impl Into<String>,
        position: impl Into<String>,
        detail: impl Into<String>,
    ) -> Self {
        Error::Format {
            path: path.into(),
            position: position.into(),
            detail: detail.into(),
        }
    }
}
