use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{ConvKernel, Element, Shape4, Tensor4};

/// Zero padding added around the input, in pixels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Pads {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Pads {
    pub const fn new(top: usize, bottom: usize, left: usize, right: usize) -> Self {
        Pads {
            top,
            bottom,
            left,
            right,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Padding {
    /// Output size `ceil(in / stride)`. Padding is split evenly; an odd
    /// remainder goes to the bottom/right edge.
    Same,
    /// No padding; output size `floor((in - k) / stride) + 1`.
    Valid,
    Explicit(Pads),
}

fn same_pad(input: usize, k: usize, stride: usize) -> (usize, usize, usize) {
    let out = input.div_ceil(stride);
    let total = ((out - 1) * stride + k).saturating_sub(input);
    (out, total / 2, total - total / 2)
}

/// Output spatial size and the concrete padding for a convolution.
pub fn conv_geometry(
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: Padding,
) -> Result<(usize, usize, Pads)> {
    if stride == 0 {
        return Err(Error::ZeroStride);
    }
    let empty = Error::EmptyOutput {
        h,
        w,
        kh,
        kw,
        stride,
    };
    match padding {
        Padding::Same => {
            let (oh, top, bottom) = same_pad(h, kh, stride);
            let (ow, left, right) = same_pad(w, kw, stride);
            Ok((oh, ow, Pads::new(top, bottom, left, right)))
        }
        Padding::Valid => {
            if h < kh || w < kw {
                return Err(empty);
            }
            Ok((
                (h - kh) / stride + 1,
                (w - kw) / stride + 1,
                Pads::default(),
            ))
        }
        Padding::Explicit(p) => {
            let ph = h + p.top + p.bottom;
            let pw = w + p.left + p.right;
            if ph < kh || pw < kw {
                return Err(empty);
            }
            Ok(((ph - kh) / stride + 1, (pw - kw) / stride + 1, p))
        }
    }
}

/// 2-D cross-correlation (no kernel flip) over an NHWC input.
pub fn conv2d<T: Element>(
    input: &Tensor4<T>,
    kernel: &ConvKernel<T>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor4<T>> {
    let s = input.shape();
    if s.c != kernel.cin() {
        return Err(Error::ChannelMismatch {
            input: s.c,
            kernel: kernel.cin(),
        });
    }
    let (kh, kw, cin, cout) = (kernel.kh(), kernel.kw(), kernel.cin(), kernel.cout());
    let (oh, ow, pads) = conv_geometry(s.h, s.w, kh, kw, stride, padding)?;
    let out_shape = Shape4::new(s.n, oh, ow, cout);
    let mut out = vec![T::zero(); out_shape.len()];
    let x = input.data();
    let weights = kernel.weights();
    let bias = kernel.bias();

    out.par_chunks_mut(ow * cout)
        .enumerate()
        .for_each(|(row, out_row)| {
            let n = row / oh;
            let oy = row % oh;
            for ox in 0..ow {
                let acc = &mut out_row[ox * cout..(ox + 1) * cout];
                // Taps b in [b0, b1) land inside the row; their pixels and
                // weights are both contiguous.
                let left = pads.left as isize - (ox * stride) as isize;
                let b0 = left.max(0) as usize;
                let b1 = (s.w as isize + left).clamp(0, kw as isize) as usize;
                let ix0 = (ox * stride + b0).saturating_sub(pads.left);
                let rows = if b0 < b1 { 0..kh } else { 0..0 };
                for a in rows {
                    let iy = (oy * stride + a) as isize - pads.top as isize;
                    if iy < 0 || iy >= s.h as isize {
                        continue;
                    }
                    let base = s.offset(n, iy as usize, ix0, 0);
                    let pixels = &x[base..base + (b1 - b0) * cin];
                    let taps = &weights[(a * kw + b0) * cin * cout..(a * kw + b1) * cin * cout];
                    if cout == 1 {
                        acc[0] += dot(pixels, taps);
                    } else {
                        for (&xv, wrow) in pixels.iter().zip(taps.chunks_exact(cout)) {
                            for (o, &wv) in acc.iter_mut().zip(wrow) {
                                *o += xv * wv;
                            }
                        }
                    }
                }
                if let Some(bias) = bias {
                    for (o, &bv) in acc.iter_mut().zip(bias) {
                        *o += bv;
                    }
                }
            }
        });
    Tensor4::from_vec(out_shape, out)
}

/// Dot product with eight interleaved partial sums, reduced in a fixed order.
fn dot<T: Element>(a: &[T], b: &[T]) -> T {
    let mut lanes = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            lanes[i] += x[i] * y[i];
        }
    }
    for (i, (&x, &y)) in ra.iter().zip(rb).enumerate() {
        lanes[i] += x * y;
    }
    let mut sum = T::zero();
    for l in lanes {
        sum += l;
    }
    sum
}

/// Multiply-accumulates performed by [`conv2d`]: every output pixel visits
/// all `kh * kw` taps, padded ones included.
pub fn conv2d_macs(
    input: Shape4,
    kh: usize,
    kw: usize,
    cout: usize,
    stride: usize,
    padding: Padding,
) -> Result<u64> {
    let (oh, ow, _) = conv_geometry(input.h, input.w, kh, kw, stride, padding)?;
    Ok((input.n * oh * ow) as u64 * (kh * kw * input.c * cout) as u64)
}
