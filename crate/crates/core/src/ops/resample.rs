use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor4};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Resample {
    /// 2x2 max pooling with stride 2; needs even height and width.
    MaxPool2,
    /// Doubles height and width by replicating each cell into a 2x2 block.
    NearestUp2,
    /// Doubles height and width, placing each cell at the even/even position
    /// of its 2x2 block and zeros elsewhere.
    UnpoolZero2,
}

pub fn resample<T: Element>(input: &Tensor4<T>, mode: Resample) -> Result<Tensor4<T>> {
    let s = input.shape();
    match mode {
        Resample::MaxPool2 => {
            if !s.h.is_multiple_of(2) || !s.w.is_multiple_of(2) {
                return Err(Error::OddDims { h: s.h, w: s.w });
            }
            Ok(Tensor4::from_fn(
                s.with_spatial(s.h / 2, s.w / 2),
                |n, h, w, c| {
                    let (y, x) = (2 * h, 2 * w);
                    input
                        .get(n, y, x, c)
                        .max(input.get(n, y, x + 1, c))
                        .max(input.get(n, y + 1, x, c))
                        .max(input.get(n, y + 1, x + 1, c))
                },
            ))
        }
        Resample::NearestUp2 => Ok(Tensor4::from_fn(
            s.with_spatial(s.h * 2, s.w * 2),
            |n, h, w, c| input.get(n, h / 2, w / 2, c),
        )),
        Resample::UnpoolZero2 => Ok(Tensor4::from_fn(
            s.with_spatial(s.h * 2, s.w * 2),
            |n, h, w, c| {
                if h % 2 == 0 && w % 2 == 0 {
                    input.get(n, h / 2, w / 2, c)
                } else {
                    T::zero()
                }
            },
        )),
    }
}

/// Keeps the top-left `h x w` window.
pub fn crop<T: Element>(input: &Tensor4<T>, h: usize, w: usize) -> Result<Tensor4<T>> {
    let s = input.shape();
    if h == 0 || w == 0 || h > s.h || w > s.w {
        return Err(Error::ShapeMismatch {
            left: s,
            right: s.with_spatial(h, w),
        });
    }
    if h == s.h && w == s.w {
        return Ok(input.clone());
    }
    Ok(Tensor4::from_fn(s.with_spatial(h, w), |n, y, x, c| {
        input.get(n, y, x, c)
    }))
}
