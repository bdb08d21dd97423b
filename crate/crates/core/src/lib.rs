//! Identification of continuous-time switched linear state-space models from
//! non-uniformly sampled input/output data.
//!
//! The estimator couples a forward-Euler integral of the fitted dynamics with
//! the estimated state trajectory and alternates three coordinate updates:
//! least squares on the mode parameters, dynamic programming over the mode
//! sequence, and a least-squares update of the states.
//!
//! Runnable examples live in `examples/`:
//!
//! - `simulate_benchmark`: generate the two-mode benchmark dataset
//! - `integral_architecture`: cost decomposition of a known model
//! - `mode_segmentation`: dynamic programming over a fixed model
//! - `fit_benchmark`: multi-start fit with transfer-function comparison
//! - `bode_compare`: frequency responses of estimate and truth
//! - `tau_sweep`: mode fit against the switching penalty
//! - `monte_carlo`: repeated fits over noise realisations

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod bcd;
pub mod cli;
pub mod dp;
pub mod error;
pub mod estimation;
pub mod integral;
pub mod io;
mod linalg;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
