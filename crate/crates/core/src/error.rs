use thiserror::Error;

/// Errors produced by the analysis and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("state space too large for exact regime: {n_states} states exceeds cap {cap}")]
    StateSpaceTooLarge { n_states: u128, cap: usize },

    #[error(
        "recency enumeration too large: cache size {cache_size} exceeds limit {limit}; \
         estimate recency with a Monte-Carlo trace instead"
    )]
    RecencyTooLarge { cache_size: usize, limit: usize },

    #[error(
        "power iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NotConverged {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
