//! Stepwise factor-model selection and testing toolkit.
//!
//! Given a panel of candidate factor returns (and optional extra test
//! assets), the toolkit expands a baseline model by forward stepwise
//! evaluation, prunes it by backward stepwise evaluation, certifies each step
//! with joint asset pricing tests (GRS and a high-dimensional alpha test),
//! and reports pricing, investment, out-of-sample, bootstrap, and Monte Carlo
//! validation metrics.

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod frontier;
pub mod panel;
pub mod simlab;
pub mod stepwise;
pub mod testing;

pub use error::{Error, Result};
