use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid pattern: {0}")]
    InvalidPattern(String),

    #[error("pattern {pattern} has zero measure under the model")]
    ZeroMeasure { pattern: String },

    #[error("no-return-within-bound: no positive shift of {pattern} found up to {bound}")]
    NoReturnWithinBound { pattern: String, bound: usize },

    #[error("budget exceeded for {what}: requested {requested}, budget {budget}")]
    BudgetExceeded {
        what: &'static str,
        requested: u128,
        budget: u128,
    },

    #[error("horizon-too-small: horizon {horizon} leaves a tail bound of {tail_bound:e}")]
    HorizonTooSmall { horizon: usize, tail_bound: f64 },

    #[error("unsupported-model: {0}")]
    UnsupportedModel(String),

    /// A hypothesis of one of the bounds does not hold; the message names it.
    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),
}
