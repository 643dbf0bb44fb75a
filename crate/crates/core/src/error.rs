use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Cholesky factorization failed even after escalating the diagonal jitter.
    #[error("matrix is not positive definite ({context}) after jitter escalation up to {jitter:e}")]
    NonPositiveDefinite { context: String, jitter: f64 },

    #[error("individual `{id}`: timestamps {first} and {second} collapse to the same pooled point")]
    DuplicateWithinIndividual { id: String, first: f64, second: f64 },

    #[error("timestamp {t} of `{id}` does not resolve to any grid point")]
    UnresolvedTimestamp { id: String, t: f64 },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("objective is not finite at the starting point")]
    NonFiniteObjective,

    #[error("optimization failed: {0}")]
    OptimFailure(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported format version {found} (this build reads up to {supported})")]
    UnsupportedFormatVersion { found: u32, supported: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Errors stemming from malformed or inconsistent user data, as opposed to
    /// numerical breakdowns.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::DuplicateWithinIndividual { .. }
                | Error::UnresolvedTimestamp { .. }
                | Error::LengthMismatch { .. }
                | Error::InvalidInput(_)
                | Error::Parse { .. }
                | Error::UnsupportedFormatVersion { .. }
                | Error::Json(_)
        )
    }

    pub fn is_numerical_error(&self) -> bool {
        matches!(
            self,
            Error::NonPositiveDefinite { .. } | Error::NonFiniteObjective | Error::OptimFailure(_)
        )
    }
}
