use std::path::PathBuf;

use thiserror::Error;

use crate::lp::ParseError;

/// Errors produced anywhere in the fitting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} inputs, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("input x{} = {value} is outside the domain of the expression", .index + 1)]
    Domain { index: usize, value: f64 },

    #[error("nonpositive input at row {row}, column {column}: {value}")]
    NonPositiveInput {
        row: usize,
        column: String,
        value: f64,
    },

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: String },

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("invalid polynomial: {0}")]
    InvalidPolynomial(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid sampling range for variable {index}: ({low}, {high})")]
    InvalidRange { index: usize, low: f64, high: f64 },

    #[error("csv error at line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("missing target column `{0}`")]
    MissingTarget(String),

    #[error("split would leave one side empty ({train} train / {test} test)")]
    DegenerateSplit { train: usize, test: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("target is constant; R^2 is undefined")]
    ConstantTarget,

    #[error("search space too large: T = {0} terms")]
    SearchSpaceTooLarge(String),

    #[error("training aborted: {0}")]
    TrainingAborted(String),

    #[error("secondary solver failed: {0}")]
    Adapter(#[from] crate::ensemble::AdapterError),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
