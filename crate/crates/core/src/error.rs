use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive definite (jitter reached {jitter:e})")]
    NotPositiveDefinite { jitter: f64 },

    #[error("eigendecomposition did not converge after {sweeps} sweeps")]
    ConvergenceFailure { sweeps: usize },

    #[error("non-finite value in {context}{}", iteration.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
    NonFiniteValue {
        context: String,
        iteration: Option<usize>,
    },

    #[error("{what} = {value} exceeds the configured cap {cap}{}", advice.as_deref().map(|a| format!("; {a}")).unwrap_or_default())]
    CapExceeded {
        what: &'static str,
        value: usize,
        cap: usize,
        advice: Option<String>,
    },

    #[error("only {available} eigenvalues above the floor, {requested} requested")]
    EigenFloorExhausted { requested: usize, available: usize },

    #[error("row {row} is not a probability vector (sum {sum})")]
    SimplexViolation { row: usize, sum: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported file version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },

    #[error("file contains no data rows")]
    EmptyFile,

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFiniteValue {
            context: context.into(),
            iteration: None,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// True for errors caused by user configuration rather than runtime failure.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Parse { .. } | Error::EmptyFile | Error::CapExceeded { .. }
        )
    }
}
