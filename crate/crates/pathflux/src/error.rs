//! Error type shared across the crate.
//!
//! Errors split into two families that the CLI maps onto exit codes:
//! input/validation problems (exit 2) and numerical guards hit during
//! identification or gradient evaluation (exit 3).

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid model, dataset, or configuration. The message names the
    /// first violated invariant and its location.
    #[error("validation error: {0}")]
    Validation(String),

    /// The enumeration grid exceeds the configured cell budget.
    #[error("capacity error: enumeration grid has {cells} cells, budget is {budget}")]
    Capacity { cells: u128, budget: u128 },

    /// An identification formula touched a conditional that is undefined
    /// (zero-mass conditioning event), i.e. the overlap assumption fails.
    #[error("identification error: overlap violated at {cell}")]
    Identification { cell: String },

    /// A gradient denominator fell below the truncation floor.
    #[error("numerical guard: {cell}")]
    NumericGuard { cell: String },

    /// Malformed CSV input; `line` is 1-based and counts the header.
    #[error("csv error at line {line}: {msg}")]
    Csv { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Process exit code the CLI uses for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Identification { .. } | Error::NumericGuard { .. } => 3,
            _ => 2,
        }
    }
}
