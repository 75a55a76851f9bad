//! Guided image filtering toolkit: classical filters (bilateral, guided
//! image filter, joint bilateral upsampling), per-pixel kernel fields with
//! attentional combination, and a small reverse-mode autodiff engine that
//! trains the multi-scale attentional guided-filter network.
//!
//! Numeric code is generic over the scalar type ([`Scalar`]): training runs
//! in `f32`, gradient verification in `f64`. Concrete aliases for both live
//! at the crate root.

pub mod checkpoint;
pub mod error;
pub mod graph;
pub mod filters;
pub mod gradcheck;
pub mod gradsuite;
pub mod image;
pub mod kernel;
pub mod loss;
pub mod network;
pub mod optim;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub mod resample;

pub use error::{CoreError, Result};
pub use graph::{Gradients, Graph, Var};
pub use resample::ResizeMode;
pub use scalar::Scalar;
pub use tensor::{Dims, TensorData};

/// f32 aliases (training / production path).
pub type Tensor32 = TensorData<f32>;
pub type Graph32 = Graph<f32>;
pub type Image32 = image::Image<f32>;

/// f64 aliases (oracles and gradient checks).
pub type Tensor64 = TensorData<f64>;
pub type Graph64 = Graph<f64>;
pub type Image64 = image::Image<f64>;
