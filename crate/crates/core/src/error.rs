//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor/layer shape mismatch. `context` names the offending op or layer.
    #[error("dimension mismatch in {context}: {detail}")]
    Dim { context: String, detail: String },

    /// A caller violated an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Bad configuration or usage (maps to CLI exit code 2).
    #[error("config error: {0}")]
    Config(String),

    /// Altered parameter outside its allowed interval.
    #[error("parameter `{name}` out of range: {value} not in [{lo}, {hi}]")]
    Range {
        name: String,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// Artifact checksum/provenance failure (maps to CLI exit code 3).
    #[error("integrity error: {0}")]
    Integrity(String),

    /// Training diverged (NaN loss or non-finite parameters).
    #[error("training error: {0}")]
    Training(String),

    /// A metric could not be computed (e.g. single-class AUC input).
    #[error("metric error: {0}")]
    Metric(String),

    /// Malformed artifact file.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub fn dim(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Dim {
            context: context.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
