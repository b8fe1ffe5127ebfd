use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{ConvKernel, Element, Shape4, Tensor4};

/// Leading crop applied to the full transposed-convolution output so that
/// exactly `in * stride` samples remain; the larger half goes to the end.
pub fn deconv_crop(k: usize, stride: usize) -> usize {
    k.saturating_sub(stride) / 2
}

/// Transposed convolution with output size exactly `input * stride`.
///
/// Input pixel `i` scatters `x[i] * w[t]` to output `i * stride + t - crop`,
/// with `crop` from [`deconv_crop`]. The sum is evaluated by gathering per
/// output pixel so that each output element has a single writer.
pub fn deconv2d<T: Element>(
    input: &Tensor4<T>,
    kernel: &ConvKernel<T>,
    stride: usize,
) -> Result<Tensor4<T>> {
    if stride == 0 {
        return Err(Error::ZeroStride);
    }
    let s = input.shape();
    if s.c != kernel.cin() {
        return Err(Error::ChannelMismatch {
            input: s.c,
            kernel: kernel.cin(),
        });
    }
    let (kh, kw, cin, cout) = (kernel.kh(), kernel.kw(), kernel.cin(), kernel.cout());
    let (oh, ow) = (s.h * stride, s.w * stride);
    let (crop_h, crop_w) = (deconv_crop(kh, stride), deconv_crop(kw, stride));
    let out_shape = Shape4::new(s.n, oh, ow, cout);
    let mut out = vec![T::zero(); out_shape.len()];
    let x = input.data();
    let weights = kernel.weights();

    // Source index along one axis for output `o` and tap `t`, if any.
    let source = |o: usize, t: usize, crop: usize, len: usize| -> Option<usize> {
        let j = (o + crop).checked_sub(t)?;
        (j % stride == 0 && j / stride < len).then_some(j / stride)
    };

    out.par_chunks_mut(ow * cout)
        .enumerate()
        .for_each(|(row, out_row)| {
            let n = row / oh;
            let oy = row % oh;
            for ox in 0..ow {
                let acc = &mut out_row[ox * cout..(ox + 1) * cout];
                for a in 0..kh {
                    let Some(iy) = source(oy, a, crop_h, s.h) else {
                        continue;
                    };
                    for b in 0..kw {
                        let Some(ix) = source(ox, b, crop_w, s.w) else {
                            continue;
                        };
                        let base = s.offset(n, iy, ix, 0);
                        let pixel = &x[base..base + cin];
                        let tap =
                            &weights[(a * kw + b) * cin * cout..(a * kw + b + 1) * cin * cout];
                        for (&xv, wrow) in pixel.iter().zip(tap.chunks_exact(cout)) {
                            for (o, &wv) in acc.iter_mut().zip(wrow) {
                                *o += xv * wv;
                            }
                        }
                    }
                }
                if let Some(bias) = kernel.bias() {
                    for (o, &bv) in acc.iter_mut().zip(bias) {
                        *o += bv;
                    }
                }
            }
        });
    Tensor4::from_vec(out_shape, out)
}

/// Multiply-accumulates of the scatter form: every input pixel times every tap.
pub fn deconv2d_macs(input: Shape4, kh: usize, kw: usize, cout: usize) -> u64 {
    (input.n * input.h * input.w) as u64 * (kh * kw * input.c * cout) as u64
}
