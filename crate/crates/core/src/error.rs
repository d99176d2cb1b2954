use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("shift entry {index} = {value} is not integral but variable {index} is integer")]
    NonIntegralShift { index: usize, value: f64 },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("simplex iteration limit of {0} exceeded")]
    IterationLimit(usize),

    #[error("LP relaxation is not optimal ({0})")]
    NotOptimal(&'static str),

    #[error("branch-and-bound aborted: {0}")]
    Bnb(String),

    #[error("network input error: {0}")]
    Shape(String),

    #[error("non-finite loss in batch {batch}: {detail}")]
    NonFiniteLoss { batch: usize, detail: String },

    #[error("candidate sets differ between paired samples ({0} vs {1} entries)")]
    CandidateMismatch(usize, usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported schema '{found}', expected '{expected}'")]
    Schema { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
