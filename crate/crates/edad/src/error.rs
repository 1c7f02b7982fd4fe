use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor extents do not line up for the requested operation.
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// A caller broke an API contract (non-scalar loss, missing gradient
    /// key, invalid permutation, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A numeric operation produced NaN or Inf.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// CSV ingestion failure, naming the offending location when known.
    #[error("ingestion error in {path} (row {row}, column {col}): {msg}")]
    Ingest {
        path: String,
        row: usize,
        col: String,
        msg: String,
    },

    /// Invalid configuration value or file.
    #[error("configuration error: {0}")]
    Config(String),

    /// A metric is undefined for the given inputs (e.g. single-class labels).
    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    /// Scoring cannot proceed (untrained or corrupt model).
    #[error("scoring error: {0}")]
    Scoring(String),

    /// Training aborted.
    #[error("training error: {0}")]
    Train(String),

    /// Checkpoint file is malformed.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
