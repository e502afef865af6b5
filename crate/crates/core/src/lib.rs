//! Problem-driven scenario generation for stochastic programs with tail
//! risk measures.
//!
//! The crate builds risk regions (sets of outcomes that can reach the
//! β-tail of a loss for some feasible decision), uses them to aggregate
//! scenarios outside the region without changing VaR or CVaR, and solves
//! scenario-based and exact mean-CVaR portfolio problems to measure the
//! effect.

pub mod cone;
pub mod distributions;
pub mod error;
pub mod experiments;
pub mod generation;
pub mod regions;
pub mod scenario;
pub mod tail_risk;

pub use error::{Error, Result};
pub use scenario::ScenarioSet;
