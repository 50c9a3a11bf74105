//! Shared error type for the whole crate.

use thiserror::Error;

/// Errors produced by any layer of the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Input or parameter dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// Non-finite values or other numeric trouble.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Argument outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// Inconsistent or invalid configuration.
    #[error("config error: {0}")]
    Config(String),
    /// API misuse, e.g. stepping a terminal state.
    #[error("usage error: {0}")]
    Usage(String),
    /// A sampling request cannot be satisfied by the dataset.
    #[error("sampling error: {0}")]
    Sampling(String),
    /// Corrupt or unparseable file contents.
    #[error("format error: {0}")]
    Format(String),
    /// A head of the wrong kind was passed to a kind-specific operation.
    #[error("kind error: {0}")]
    Kind(String),
    /// An assessor method does not support the requested operation.
    #[error("method error: {0}")]
    Method(String),
    /// Evaluation inputs cannot produce the requested report.
    #[error("evaluation error: {0}")]
    Eval(String),
    /// Artifacts do not belong together (hash mismatch).
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
