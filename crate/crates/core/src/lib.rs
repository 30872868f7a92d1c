//! Population projection for institutional workforces with a discrete-time
//! Markov chain over (category, age, seniority), Monte Carlo simulation of
//! the projected counts, and salary-cost aggregation.

// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(feature = "cli")]
pub mod cli;
pub mod config;
pub mod error;
pub mod estimation;
pub mod finance;
pub mod ingestion;
pub mod matrix;
pub mod model;
pub mod montecarlo;
pub mod projection;
pub mod report;
pub mod state_model;
pub mod synthetic;

pub use error::{Error, Result};
pub use model::{fit, FittedModel};
pub use state_model::{validate_config, RawStateSpace, StateSpaceConfig, Triple};
