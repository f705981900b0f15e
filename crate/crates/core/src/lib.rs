//! Bayesian detection of two ordered change points in a Markov sequence
//! whose middle segment follows one of several candidate kernels.

pub mod cli;
pub mod detect;
pub mod error;
pub mod filter;
pub mod likelihood;
pub mod model;
pub mod oracle;
pub mod simulate;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use filter::{init_filter, step_filter, FilterState};
pub use model::ModelSpec;
pub use solver::{solve, SolverConfig, StoppingPolicy};
