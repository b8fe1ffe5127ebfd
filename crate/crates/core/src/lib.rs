//! Inference kernels for fully-convolutional single-image depth networks.
//!
//! Tensors are dense NHWC arrays ([`Tensor4`]). On top of the primitive
//! kernels in [`ops`] sit the single-pass [`interleave`] kernel, the naive
//! and interleaved up-convolution blocks in [`upconv`], the six
//! encoder/decoder networks in [`arch`], and the depth losses and metrics in
//! [`loss`] and [`metrics`].

pub mod arch;
pub mod error;
pub mod interleave;
pub mod loss;
pub mod metrics;
pub mod ops;
pub mod tensor;
pub mod upconv;

pub use error::{Error, Result};
pub use tensor::{BatchNormParams, ConvKernel, Element, Shape4, Tensor4};
