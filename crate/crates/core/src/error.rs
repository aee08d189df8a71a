use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An income observation that is zero, negative, NaN or infinite.
    #[error("rejected observation {value}: incomes must be finite and strictly positive")]
    RejectedObservation { value: f64 },

    #[error("insufficient sample: {what} needs at least {needed} observations, got {got}")]
    InsufficientSample {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("numerical integration of {integral} did not converge (estimated error {error:e})")]
    Integration { integral: String, error: f64 },

    /// The observation source ran dry before the stopping condition held.
    #[error("stream exhausted after {n_reached} observations before stopping (last threshold {last_threshold})")]
    InsufficientData {
        n_reached: usize,
        last_threshold: f64,
    },

    /// A row of an input file that is not a valid income.
    #[error("row {row}: {message}")]
    MalformedInput { row: usize, message: String },

    #[error("observation source failed: {0}")]
    Source(String),

    #[error("insufficient replications: need at least {needed}, got {got}")]
    InsufficientReplications { needed: usize, got: usize },

    #[error("replication {index} failed: {source}")]
    Replication {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}
