//! Adversarial scenario perturbation for closed-loop driving evaluation.

pub mod candidates;
pub mod criticality;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod skills;

pub use error::{Error, Result};
