//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Input file header does not match the expected schema.
    #[error("schema mismatch: missing columns {missing:?}, unexpected columns {unexpected:?}")]
    SchemaMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },

    #[error("non-numeric cell in column `{column}`, row {row}: `{value}`")]
    NonNumericCell {
        column: String,
        row: usize,
        value: String,
    },

    /// Invalid configuration (bad hyperparameter, malformed rule config,
    /// inconsistent experiment settings).
    #[error("invalid config: {0}")]
    Config(String),

    /// Invalid data passed to an operation (empty input, unknown code,
    /// all-null column, length mismatch).
    #[error("invalid data: {0}")]
    Data(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// Partial-supervision imputation found unlabeled rows for a decision
    /// class with no explanation-labeled donor rows.
    #[error("no explanation-labeled rows with decision y={y}; cannot impute that class")]
    MissingDonor { y: u8 },
}

impl Error {
    /// True for errors a CLI should report as a configuration problem
    /// (exit code 2) rather than a data problem (exit code 3).
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Json(_))
    }
}
