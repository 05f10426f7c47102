//! Surrogate projected gradient descent for black-box classification metrics.
//!
//! A linear classifier is trained by running gradient descent in the
//! low-dimensional space of surrogate-loss values, with the metric gradient
//! estimated from random perturbations, and then projecting back onto the set
//! of achievable surrogate profiles.

pub mod baselines;
pub mod data;
pub mod error;
pub mod gradest;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod optimizer;
pub mod surrogates;

pub use error::{Error, Result};
