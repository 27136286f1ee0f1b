//! Simulation, estimation and Monte Carlo testing for the multifractal model
//! of asset returns (MMAR).
//!
//! Log price is fractionally integrated Gaussian noise run in multifractal
//! trading time. The crate simulates such series ([`longmem::simulate_mmar`]),
//! estimates the Hurst exponent `H` and the cascade parameter `lambda` from
//! partition-function scaling ([`scaling::estimate`]) and tests `H = 0.5`,
//! `lambda = 1` and both jointly against Monte Carlo reference clouds
//! ([`mctest`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cascade;
pub mod error;
pub mod io;
pub mod longmem;
pub mod mctest;
pub mod pipeline;
pub mod prefilter;
pub mod scaling;
pub mod series;
pub mod stats;

pub use error::{MmarError, Result};
pub use series::{cumulate, to_log_returns, Lane, LogReturnSeries, Origin, PriceSeries, SeedSpec};
