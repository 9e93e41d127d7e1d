//! Exact state-transition-field analysis of cache replacement schemes under
//! the independent reference model, with a Monte-Carlo engine for
//! cross-checking.

pub mod error;
pub mod field;
pub mod schemes;
pub mod sim;
pub mod state_space;
pub mod steady;

pub use error::{Error, Result};
pub use schemes::{Scheme, SchemeModel, TlpVariant, TransitionMatrix};
pub use state_space::{Popularity, SimplexPoint, StateSpace};
