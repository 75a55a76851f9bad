//! Data harness for the guided-filtering toolkit: dataset pairing and
//! synthesis, degradation, metrics, augmentation, the training loop, and
//! benchmark evaluation.

pub mod augment;
pub mod dataset;
pub mod degrade;
pub mod error;
pub mod eval;
pub mod io;
pub mod metrics;
pub mod model;
pub mod texture;
pub mod trainer;

pub use error::{HarnessError, Result};
