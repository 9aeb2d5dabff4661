//! Encoder-decoder semantic segmentation for skin lesion images.
//!
//! The numeric core ([`tensor`], [`layers`], [`graph`], [`optim`],
//! [`checkpoint`]) is generic over the element type through [`Scalar`];
//! training and the data pipeline run in `f32`, and the aliases below name
//! the concrete types used there.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod label;
pub mod metrics;
pub mod layers;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use error::{Error, Result};
pub use graph::{GraphSpec, Network};
pub use label::LabelMap;
pub use rng::Rng;
pub use scalar::Scalar;
pub use tensor::{DualSlot, Tensor};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Checkpoint32 = Checkpoint<f32>;
