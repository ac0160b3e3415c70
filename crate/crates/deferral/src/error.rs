use thiserror::Error;

/// Crate-wide error type. Every fallible operation returns one of these
/// variants so callers can match on the failure class instead of a string.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Training produced a non-finite loss; `step` is the global minibatch
    /// index at which the divergence was detected.
    #[error("training diverged at step {step}: {detail}")]
    TrainingDiverged { step: usize, detail: String },

    /// The expert oracle was queried but could not produce a label.
    #[error("expert unavailable: {0}")]
    ExpertUnavailable(String),

    /// A metric has an empty denominator or a single-class input and is
    /// mathematically undefined for the given data.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// A malformed value in row-oriented input; `line` is 1-based and counts
    /// the header line.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// The input's column layout does not match the declared schema.
    #[error("schema error: {0}")]
    Schema(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
