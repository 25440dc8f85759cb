use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("schema config error: {0}")]
    SchemaConfig(String),

    #[error("missing required column `{column}` (logical field `{field}`)")]
    MissingColumn { field: &'static str, column: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("non-finite value at position {0}")]
    NonFinite(usize),

    #[error("degenerate abscissae: {0}")]
    DegenerateAbscissae(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("date {date} outside fitted range {first}..={last}")]
    DateOutOfRange {
        date: chrono::NaiveDate,
        first: chrono::NaiveDate,
        last: chrono::NaiveDate,
    },

    #[error("store format error: {0}")]
    Store(String),
}

impl Error {
    /// Problems with the data itself rather than the environment or arguments.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::InsufficientData(_)
                | Error::DegenerateAbscissae(_)
                | Error::DateOutOfRange { .. }
                | Error::NonFinite(_)
        )
    }
}
