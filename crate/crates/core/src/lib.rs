//! Continual learning for regression surrogate models.
//!
//! The crate turns tabular engineering datasets into experience streams
//! (bin-incremental or input-incremental), trains a small MLP on them under
//! five strategies (naive fine-tuning, joint retraining, experience replay,
//! EWC and GEM) and scores the runs with regression forgetting metrics.

pub mod datasets;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod scenarios;
pub mod strategies;

pub use error::{CoreError, Result};
