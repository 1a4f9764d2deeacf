//! Error taxonomy shared across the crate.
//!
//! The CLI maps these classes onto distinct exit codes, so new variants
//! should pick the class they belong to rather than inventing one.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape disagreement between tensors or between a tensor and a layer.
    #[error("{op}: dimension mismatch: {lhs} vs {rhs}")]
    Dimension { op: String, lhs: String, rhs: String },

    /// Invalid configuration value; names the offending field.
    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },

    /// Malformed input data (VGRF files, demographics, archives, checkpoints).
    #[error("format error{}: {message}", path.as_ref().map(|p| format!(" in {p}")).unwrap_or_default())]
    Format { path: Option<String>, message: String },

    /// Subject cannot be labeled (missing from demographics, unknown stage).
    #[error("labeling error: {message}")]
    Labeling { message: String },

    /// Oversampling preconditions violated.
    #[error("oversampling error: {message}")]
    Oversample { message: String },

    /// Fold construction impossible for the requested k / unit.
    #[error("split error: {message}")]
    Split { message: String },

    /// Out-of-range class label or index.
    #[error("index error: {message}")]
    Index { message: String },

    /// API contract violation (e.g. backward on a non-scalar).
    #[error("contract violation: {message}")]
    Contract { message: String },

    /// Non-finite values where finite ones are required.
    #[error("numerical instability: {message}")]
    Numerical { message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn dim(op: &str, lhs: impl std::fmt::Debug, rhs: impl std::fmt::Debug) -> Self {
        Error::Dimension { op: op.to_string(), lhs: format!("{lhs:?}"), rhs: format!("{rhs:?}") }
    }

    pub fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config { field: field.to_string(), message: message.into() }
    }

    pub fn format(path: Option<&str>, message: impl Into<String>) -> Self {
        Error::Format { path: path.map(str::to_string), message: message.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
