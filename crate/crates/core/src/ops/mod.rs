//! Primitive NHWC kernels. Every kernel is a pure function; parallel loops
//! split work over output rows, and each output element is produced by one
//! worker in a fixed summation order, so results never depend on the number
//! of threads.

mod conv;
mod deconv;
mod nonbt;
mod pointwise;
mod resample;

pub use conv::{conv2d, conv2d_macs, conv_geometry, Padding, Pads};
pub use deconv::{deconv2d, deconv2d_macs, deconv_crop};
pub use nonbt::nonbt_block;
pub use pointwise::{add, batchnorm_infer, relu};
pub use resample::{crop, resample, Resample};
