use super::{conv2d, relu, Padding};
use crate::error::{Error, Result};
use crate::tensor::{ConvKernel, Element, Tensor4};

/// Factorized non-bottleneck block: a 3x1 convolution and a 1x3 convolution,
/// each followed by ReLU, both stride 1 with same padding.
pub fn nonbt_block<T: Element>(
    input: &Tensor4<T>,
    k31: &ConvKernel<T>,
    k13: &ConvKernel<T>,
) -> Result<Tensor4<T>> {
    if (k31.kh(), k31.kw()) != (3, 1) {
        return Err(Error::KernelExtent {
            kh: k31.kh(),
            kw: k31.kw(),
            expected: "3x1",
        });
    }
    if (k13.kh(), k13.kw()) != (1, 3) {
        return Err(Error::KernelExtent {
            kh: k13.kh(),
            kw: k13.kw(),
            expected: "1x3",
        });
    }
    let mid = relu(&conv2d(input, k31, 1, Padding::Same)?);
    Ok(relu(&conv2d(&mid, k13, 1, Padding::Same)?))
}
