//! Stochastic uplink latency model for a compress-then-transmit edge link,
//! with reliability-aware design solvers and Monte Carlo validation.
//!
//! * [`specfun`]: log-gamma, regularized incomplete gamma and its inverse,
//!   seeded Gamma/exponential samplers.
//! * [`model`]: compression cost, ε-outage rate and the shifted-Gamma latency law.
//! * [`optimizer`]: outage-constrained, latency-constrained and mean-latency
//!   designs, plus a brute-force grid oracle.
//! * [`montecarlo`]: simulation of latency, outage and reliability.
//! * [`config`], [`experiments`], [`output`], [`cli`]: the experiment runner.

// Guards are written as `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod model;
pub mod montecarlo;
pub mod optimizer;
pub mod output;
pub mod specfun;

pub use error::{Error, Result};
