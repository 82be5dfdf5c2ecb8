//! Crate-wide error type.
//!
//! Row indices in error payloads are zero-based positions among the data rows
//! (the CSV header is not counted).

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // ── data ingestion ───────────────────────────────────────────────────
    #[error("{path}: file contains no data rows")]
    EmptyFile { path: String },
    #[error("{path}: unknown column `{column}`")]
    UnknownColumn { path: String, column: String },
    #[error("{path}: missing required column `{column}`")]
    MissingColumn { path: String, column: String },
    #[error("unknown level `{value}` for column `{column}` at row {row}")]
    UnknownCategoryLevel {
        row: usize,
        column: String,
        value: String,
    },
    #[error("cannot parse `{value}` as a number in column `{column}` at row {row}")]
    UnparsableNumber {
        row: usize,
        column: String,
        value: String,
    },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("model file version {found} is not supported (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    // ── domain operations ────────────────────────────────────────────────
    #[error("insured value and market value must both be positive")]
    NonPositiveValuation,
    #[error("no rows with a positive claim size")]
    EmptyResult,
    #[error("non-positive response at row {row}; apply the positive-claim filter first")]
    NonPositiveResponse { row: usize },
    #[error("{side} partition is empty for test years {years:?}")]
    EmptyPartition { side: &'static str, years: Vec<i32> },
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    // ── model fitting ────────────────────────────────────────────────────
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("mtry must be between 1 and {p}, got {mtry}")]
    InvalidMtry { mtry: usize, p: usize },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("operation is not applicable to {kind} models")]
    NotApplicable { kind: &'static str },
    #[error("every row appears in every bootstrap sample; no out-of-bag rows")]
    NoOobRows,
    #[error("training objective became non-finite at round {round}")]
    NonFiniteObjective { round: usize },
    #[error("design matrix is rank deficient; collinear columns: {columns:?}")]
    RankDeficient { columns: Vec<String> },

    // ── evaluation and interpretation ────────────────────────────────────
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("the two features must differ, both are `{0}`")]
    DuplicateFeature(String),
    #[error("repeats must be at least 1")]
    InvalidRepeats,
}

impl Error {
    pub(crate) fn invalid_config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }
}
