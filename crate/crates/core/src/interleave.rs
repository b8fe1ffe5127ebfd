//! Merging four quarter-resolution feature maps into one map of twice the
//! height and width.
//!
//! Output cell `(h, w)` is taken from `a` when `h` and `w` are both even,
//! from `b` for even `h` / odd `w`, from `c` for odd `h` / even `w` and from
//! `d` when both are odd. [`interleave4`] does this in one pass over the
//! output; [`interleave4_reference`] is the older pairwise formulation (width
//! merges, then a height merge) kept as an oracle.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Element, Shape4, Tensor4};

/// Four equally shaped tensors to interleave.
#[derive(Clone, Copy, Debug)]
pub struct InterleaveInputs<'a, T = f32> {
    a: &'a Tensor4<T>,
    b: &'a Tensor4<T>,
    c: &'a Tensor4<T>,
    d: &'a Tensor4<T>,
}

impl<'a, T: Element> InterleaveInputs<'a, T> {
    pub fn new(
        a: &'a Tensor4<T>,
        b: &'a Tensor4<T>,
        c: &'a Tensor4<T>,
        d: &'a Tensor4<T>,
    ) -> Result<Self> {
        for other in [b, c, d] {
            if other.shape() != a.shape() {
                return Err(Error::ShapeMismatch {
                    left: a.shape(),
                    right: other.shape(),
                });
            }
        }
        Ok(InterleaveInputs { a, b, c, d })
    }

    pub fn input_shape(&self) -> Shape4 {
        self.a.shape()
    }

    pub fn output_shape(&self) -> Shape4 {
        let s = self.a.shape();
        s.with_spatial(2 * s.h, 2 * s.w)
    }
}

/// Source of output element `i` of an `(N, H, W, C)` output: which input
/// (0..4 for a..d) and the linear index into it. `h` and `w` must be even.
#[inline]
pub fn source_of(i: usize, h: usize, w: usize, c: usize) -> (usize, usize) {
    let n_in = i / (h * w * c);
    let h_in = (i % (h * w * c)) / (w * c);
    let w_in = (i % (w * c)) / c;
    let c_in = i % c;
    let index_in = n_in * h * w * c / 4 + (h_in / 2) * w * c / 2 + (w_in / 2) * c + c_in;
    let which = match (h_in.is_multiple_of(2), w_in.is_multiple_of(2)) {
        (true, true) => 0,
        (true, false) => 1,
        (false, true) => 2,
        (false, false) => 3,
    };
    (which, index_in)
}

/// Single-pass interleave: every output element is decoded from its linear
/// index and written exactly once, with no intermediate buffers.
pub fn interleave4<T: Element>(inputs: &InterleaveInputs<'_, T>) -> Tensor4<T> {
    let out_shape = inputs.output_shape();
    let Shape4 { h, w, c, .. } = out_shape;
    let sources = [
        inputs.a.data(),
        inputs.b.data(),
        inputs.c.data(),
        inputs.d.data(),
    ];
    let mut out = vec![T::zero(); out_shape.len()];
    out.par_iter_mut()
        .with_min_len(4096)
        .enumerate()
        .for_each(|(i, o)| {
            let (which, index_in) = source_of(i, h, w, c);
            *o = sources[which][index_in];
        });
    Tensor4::from_vec(out_shape, out).expect("output shape is consistent")
}

fn interleave_width<T: Element>(left: &Tensor4<T>, right: &Tensor4<T>) -> Tensor4<T> {
    let s = left.shape();
    Tensor4::from_fn(s.with_spatial(s.h, 2 * s.w), |n, y, x, ch| {
        let src = if x % 2 == 0 { left } else { right };
        src.get(n, y, x / 2, ch)
    })
}

fn interleave_height<T: Element>(top: &Tensor4<T>, bottom: &Tensor4<T>) -> Tensor4<T> {
    let s = top.shape();
    Tensor4::from_fn(s.with_spatial(2 * s.h, s.w), |n, y, x, ch| {
        let src = if y % 2 == 0 { top } else { bottom };
        src.get(n, y / 2, x, ch)
    })
}

/// Three-step interleave: `a|b` and `c|d` along width, then the two results
/// along height.
pub fn interleave4_reference<T: Element>(inputs: &InterleaveInputs<'_, T>) -> Tensor4<T> {
    let ab = interleave_width(inputs.a, inputs.b);
    let cd = interleave_width(inputs.c, inputs.d);
    interleave_height(&ab, &cd)
}

/// Inverse of the interleave: splits a tensor with even height and width into
/// its four parity planes `[a, b, c, d]`.
pub fn deinterleave4<T: Element>(input: &Tensor4<T>) -> Result<[Tensor4<T>; 4]> {
    let s = input.shape();
    if !s.h.is_multiple_of(2) || !s.w.is_multiple_of(2) {
        return Err(Error::OddDims { h: s.h, w: s.w });
    }
    let q = s.with_spatial(s.h / 2, s.w / 2);
    let plane = |dy: usize, dx: usize| {
        Tensor4::from_fn(q, |n, y, x, c| input.get(n, 2 * y + dy, 2 * x + dx, c))
    };
    Ok([plane(0, 0), plane(0, 1), plane(1, 0), plane(1, 1)])
}
