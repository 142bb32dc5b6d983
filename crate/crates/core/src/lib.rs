//! Statistical query (SQ) simulation for sparse mixture detection.
//!
//! The crate is organised bottom-up:
//!
//! - [`sq`]: bounded queries, tolerances, transcripts and the budget-enforcing runner.
//! - [`models`]: Gaussian mixture and mixture-of-regression instances, samplers and
//!   population expectations.
//! - [`oracles`]: the honest empirical oracle, a perturbed population oracle and the
//!   adversarial oracle used for lower-bound certificates.
//! - [`detectors`]: SQ detection tests for both models plus calibration.
//! - [`analysis`]: chi-square cross moments, Le Cam bounds, sign-support combinatorics
//!   and Hermite expansions.
//! - [`proxgrad`]: the lasso solved by proximal gradient through gradient queries.
//!
//! Data-parallel loops go through [`exec::Exec`]. With the `parallel` feature (on by
//! default) `Exec::Parallel` uses rayon; without it every loop runs sequentially.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod detectors;
pub mod error;
pub mod exec;
pub mod models;
pub mod numerics;
pub mod oracles;
pub mod proxgrad;
pub mod sq;

pub use error::{Error, Result};
