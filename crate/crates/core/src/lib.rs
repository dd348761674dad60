//! Exact derivatives of the logistic log-partition function, Taylor
//! approximations of the dropout regularizer, convergence diagnostics for
//! those series, and a small training harness that compares dropout with
//! L2 and Taylor-penalty training.

pub mod combinatorics;
pub mod error;
pub mod exact;
pub mod noise;
pub mod partition;
pub mod taylor;
pub mod train;

pub use error::{Error, Result};

/// Seed used whenever a caller does not supply one.
pub const DEFAULT_SEED: u64 = 7;
