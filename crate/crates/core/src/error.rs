//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A domain value violates its invariants (bad geometry, bad parameter).
    #[error("validation error: {0}")]
    Validation(String),

    /// A pruning schedule would drop the token count below one.
    #[error("infeasible schedule: token count falls below 1 at layer {layer} ({tokens_before} - {delta})")]
    InfeasibleSchedule {
        layer: u32,
        tokens_before: u64,
        delta: u64,
    },

    /// Latency model fitting needs at least two distinct token counts.
    #[error("fit error: {0}")]
    Fit(String),

    /// Bandwidth or latency estimation received unusable inputs.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// A trace, table or config file failed structural validation.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
