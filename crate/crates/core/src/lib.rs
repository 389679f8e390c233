//! Multi-action dialog policy learning from logged bandit feedback.
//!
//! The crate bundles a small autodiff core ([`nncore`]), a synthetic
//! task-oriented dialog environment ([`dialogworld`]), bandit-log generation
//! ([`datasets`]), multi-label policies ([`policy`]), feedback-enhanced
//! thresholding ([`fet`]), the training objectives ([`objectives`]) and the
//! training/evaluation harness ([`trainer`]).

pub mod datasets;
pub mod dialogworld;
pub mod error;
pub mod fet;
pub mod nncore;
pub mod objectives;
pub mod policy;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
