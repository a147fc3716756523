//! Convolutional feature filters with entropy instrumentation, built into
//! miniature FCN and U-net segmentation networks trained from scratch.

pub mod entropy;
pub mod error;
pub mod gradcheck;
pub mod label;
pub mod layers;
pub mod metrics;
pub mod nets;
pub mod rng;
pub mod synthdata;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use label::LabelMap;
pub use tensor::{ConvKernel, Padding, Tensor};
