//! Desk-scale end-to-end driving laboratory.
//!
//! - [`tensor_nn`]: tensors, layer kernels with gradients, Adam
//! - [`models`]: the four vision brains, preprocessing, weight files
//! - [`simworld`]: circuits, unicycle dynamics, ground-plane camera, noise
//! - [`pilots`]: PID line-following expert and the neural-brain adapter
//! - [`datakit`]: dataset recording, augmentation, splitting, the LRDS container
//! - [`harness`]: training, internal and external metrics, suites, reports

pub mod datakit;
pub mod error;
pub mod harness;
pub mod models;
pub mod pilots;
pub mod simworld;
pub mod tensor_nn;

pub use error::{Error, Result};
pub use tensor_nn::Tensor;
