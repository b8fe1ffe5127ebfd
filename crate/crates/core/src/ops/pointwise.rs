use crate::error::{Error, Result};
use crate::tensor::{BatchNormParams, Element, Tensor4};

pub fn relu<T: Element>(input: &Tensor4<T>) -> Tensor4<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Elementwise sum of two equally shaped tensors.
pub fn add<T: Element>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            left: a.shape(),
            right: b.shape(),
        });
    }
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| x + y)
        .collect();
    Tensor4::from_vec(a.shape(), data)
}

/// `gamma * (x - mean) / sqrt(variance + eps) + beta`, per channel.
///
/// Only `variance + eps > 0` is required here, so hand-built parameters
/// with `eps = 0` and positive variance are accepted.
pub fn batchnorm_infer<T: Element>(
    input: &Tensor4<T>,
    params: &BatchNormParams<T>,
) -> Result<Tensor4<T>> {
    let c = input.shape().c;
    for len in [
        params.mean.len(),
        params.variance.len(),
        params.gamma.len(),
        params.beta.len(),
    ] {
        if len != c {
            return Err(Error::ParamLength {
                got: len,
                expected: c,
            });
        }
    }
    let inv_std: Vec<T> = params
        .variance
        .iter()
        .map(|&v| (v + params.eps).sqrt())
        .collect();
    if inv_std.iter().any(|s| s.is_nan() || *s <= T::zero()) {
        return Err(Error::InvalidParam(
            "batch-norm variance + eps must be positive".into(),
        ));
    }
    let mut out = input.clone();
    for px in out.data_mut().chunks_exact_mut(c) {
        for (ch, v) in px.iter_mut().enumerate() {
            *v = params.gamma[ch] * (*v - params.mean[ch]) / inv_std[ch] + params.beta[ch];
        }
    }
    Ok(out)
}
