use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid `{field}`: {reason}")]
    Validation { field: &'static str, reason: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    Numeric(&'static str),

    #[error("oracle integration diverged at sample {index}")]
    OracleDivergence { index: usize },

    #[error("training diverged at epoch {epoch} (last finite loss {last_finite_loss})")]
    TrainingDivergence { epoch: usize, last_finite_loss: f64 },

    #[error("degenerate statistics: {0} series is constant")]
    DegenerateStats(&'static str),

    #[error("degenerate range: target series is constant")]
    DegenerateRange,

    #[error("insufficient data: need at least {needed} samples, have {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("stale tape: {0}")]
    StaleTape(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for numerical blow-ups, which callers report instead of aborting on.
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            Error::OracleDivergence { .. } | Error::TrainingDivergence { .. } | Error::Numeric(_)
        )
    }
}
