//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A matrix that must be positive definite failed its Cholesky
    /// factorization; `pivot` is the first non-positive pivot index.
    #[error("matrix is not positive definite (first non-positive pivot at index {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("matrix has dimension zero")]
    EmptyMatrix,

    #[error("matrix is singular (zero pivot at index {pivot})")]
    Singular { pivot: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: String,
        expected: String,
        got: String,
    },

    #[error("data error in {file}{}: {message}", row.map(|r| format!(", row {r}")).unwrap_or_default())]
    Data {
        file: String,
        row: Option<usize>,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parameter set is infeasible: {0}")]
    Infeasible(String),

    #[error("gradient overflow: {0}")]
    GradientOverflow(String),

    #[error("reports are incompatible: {0}")]
    MismatchedReports(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn shape(context: impl Into<String>, expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            expected: expected.into(),
            got: got.into(),
        }
    }

    pub fn data(file: impl Into<String>, row: Option<usize>, message: impl Into<String>) -> Self {
        Error::Data {
            file: file.into(),
            row,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
