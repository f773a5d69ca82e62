//! Joint maximum-likelihood estimation of carrier and sampling frequency
//! offsets from a two-symbol OFDM preamble.
//!
//! * [`ofdm_model`] synthesizes impaired preambles and exposes the analytic
//!   frequency-domain decomposition.
//! * [`estimators`] holds the proposed and Nguyen-Le grid-search estimators.
//! * [`crb`] computes Fisher information and Cramer-Rao bounds.
//! * [`harness`] runs deterministic Monte-Carlo sweeps.

// `!(x > 0.0)` is used deliberately so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod crb;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod ofdm_model;
pub mod rng;

pub use error::{Result, SyncError};
pub use num_complex::Complex64;
