//! Deterministic community microgrid energy-management simulator.
//!
//! Inputs are an hourly (or finer) profile of demand, price, grid
//! availability and renewable generation, plus a static system description.
//! A rule-based dispatcher allocates power among PV, wind, battery, diesel
//! and the utility grid each step; the resulting trace is aggregated into
//! cost, reliability and emissions metrics, and compared across stress
//! scenarios.

// Range checks are written as negated comparisons so that NaN always fails
// them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod battery;
pub mod cli;
pub mod config;
pub mod dispatch;
pub mod metrics;
pub mod model;
pub mod profiles;
pub mod scenarios;
