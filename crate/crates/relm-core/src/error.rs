//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("ingestion error in {path} at row {row}, column {column}: {reason}")]
    Ingestion {
        path: String,
        row: usize,
        column: String,
        reason: String,
    },

    #[error("missing file or unreadable: {path}: {reason}")]
    MissingFile { path: String, reason: String },

    #[error("column {column:?} not found in {path}")]
    MissingColumn { path: String, column: String },

    #[error("dataset too short: series of length {len} cannot be windowed with Q={q}")]
    DatasetTooShort { len: usize, q: usize },

    #[error("degenerate series: training split of feature {feature} has zero variance")]
    DegenerateSeries { feature: usize },

    #[error("underdetermined system: n={n} rows < M={m} columns")]
    Underdetermined { n: usize, m: usize },

    #[error("singular triangular factor: |R[{index},{index}]| below threshold")]
    SingularTriangular { index: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("execution environment error: {0}")]
    ExecutionEnvironment(String),

    #[error("training diverged (loss became non-finite) at epoch {epoch}; try a lower learning rate")]
    Divergence { epoch: usize },

    #[error("unsupported architecture for this operation: {0}")]
    UnsupportedArch(&'static str),

    #[error("not available: {0}")]
    NotAvailable(&'static str),

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("unsupported model format version: {0}")]
    ModelVersion(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
