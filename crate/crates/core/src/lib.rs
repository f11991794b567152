//! Batch online learning for sparse logistic regression.

pub mod datagen;
pub mod error;
pub mod harness;
pub mod learner;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod seed;
pub mod theory;

pub use error::{Error, Result};
