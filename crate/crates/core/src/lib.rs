//! Spatio-temporally correlated wind power scenarios.
//!
//! Each (farm, horizon) pair gets a heteroscedastic regression that corrects
//! the NWP forecast, an empirical distribution of its standardized residuals,
//! and a shared Gaussian copula ties all pairs together. Scenario generation
//! is split into an offline part (fitting, copula estimation, drawing a block
//! of standardized errors) and a cheap online part that shifts and scales
//! the pre-drawn block with the current conditions.

pub mod cli;
pub mod copula;
pub mod error;
pub mod features;
pub mod hetero;
pub mod metrics;
pub mod pipeline;
pub mod stats;
pub mod synth;
pub mod timeseries;

pub use error::{Error, Result};
