//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("column `{0}` not found in header")]
    MissingColumn(String),

    #[error("treatment value `{value}` outside {{0,1}} at data row {row}")]
    NonBinaryTreatment { row: usize, value: String },

    #[error("non-finite or unparseable value `{value}` at data row {row}, column `{column}`")]
    NonFiniteValue {
        row: usize,
        column: String,
        value: String,
    },

    #[error("invalid split: test_count {test_count} out of range for n = {n}")]
    InvalidSplit { test_count: usize, n: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("observation weights are all zero")]
    AllZeroWeights,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate group: {0}")]
    DegenerateGroup(String),

    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("bad covariate shape: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    BadCovariateShape {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("bound diagnostics for a factual-counterfactual model require the step-3 anchors")]
    MissingAnchors,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
