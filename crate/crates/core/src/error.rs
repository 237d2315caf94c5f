use thiserror::Error;

use crate::tuning::TracePoint;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("incomplete configuration: {0}")]
    IncompleteConfig(String),

    #[error("degenerate statistics: {0}")]
    DegenerateStats(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A row-level failure while loading tabular data. `row` is the 1-based line number in the file.
    #[error("row {row}: {message}")]
    Load { row: usize, message: String },

    /// The objective failed mid-run; `partial` holds every evaluation completed before the failure.
    #[error("objective failed after {} evaluations: {source}", partial.len())]
    ObjectiveFailed {
        source: Box<Error>,
        partial: Vec<TracePoint>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
