//! Convolutional sequence-to-sequence energy disaggregation.
//!
//! A network of gated-linear-unit convolution blocks, max pooling and
//! residual fully connected refinement maps a long window of aggregate
//! household power to a shorter, centered window of one appliance's power.
//! Strided, overlapping windows are averaged back into a full trace.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod metrics;
pub mod network;
pub mod tensor;
pub mod training;
pub mod windowing;

pub use error::{Error, Result};
pub use network::{Network, NetworkConfig};
pub use tensor::Tensor;
