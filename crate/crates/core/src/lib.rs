//! Off-dynamics reinforcement learning with skewed source sampling, MixUp
//! bridging and classifier-based reward correction, plus tabular tools for
//! checking the underlying performance bounds.

pub mod agent;
pub mod approximator;
pub mod envs;
pub mod error;
pub mod harness;
pub mod mixup;
pub mod ratio;
pub mod seeding;
pub mod skew;
pub mod tabular;

pub use error::{Error, Result};
