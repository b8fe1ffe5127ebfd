//! Depth regression losses with analytic gradients.
//!
//! Every loss averages over the valid pixels of a [`DepthPair`]: pixels whose
//! ground truth is nonpositive or not finite are masked out of both the sum
//! and the count, and receive a zero gradient. Sums are accumulated in `f64`
//! in linear pixel order.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor4};

/// A predicted depth map and its ground truth, both `(N, H, W, 1)` in meters.
#[derive(Clone, Copy, Debug)]
pub struct DepthPair<'a, T = f32> {
    prediction: &'a Tensor4<T>,
    ground_truth: &'a Tensor4<T>,
}

impl<'a, T: Element> DepthPair<'a, T> {
    pub fn new(prediction: &'a Tensor4<T>, ground_truth: &'a Tensor4<T>) -> Result<Self> {
        if prediction.shape() != ground_truth.shape() {
            return Err(Error::ShapeMismatch {
                left: prediction.shape(),
                right: ground_truth.shape(),
            });
        }
        if prediction.shape().c != 1 {
            return Err(Error::InvalidParam(format!(
                "depth maps have one channel, got {}",
                prediction.shape().c
            )));
        }
        Ok(DepthPair {
            prediction,
            ground_truth,
        })
    }

    pub fn prediction(&self) -> &'a Tensor4<T> {
        self.prediction
    }

    pub fn ground_truth(&self) -> &'a Tensor4<T> {
        self.ground_truth
    }

    /// `(index, prediction, ground truth)` for every valid pixel, as `f64`.
    pub fn valid_pixels(&self) -> impl Iterator<Item = (usize, f64, f64)> + 'a {
        self.prediction
            .data()
            .iter()
            .zip(self.ground_truth.data())
            .enumerate()
            .filter_map(|(i, (&d, &g))| {
                let g = g.as_f64();
                is_valid_depth(g).then_some((i, d.as_f64(), g))
            })
    }

    pub fn valid_count(&self) -> usize {
        self.valid_pixels().count()
    }
}

/// Ground truth counts as valid when it is finite and strictly positive.
pub fn is_valid_depth(g: f64) -> bool {
    g.is_finite() && g > 0.0
}

/// Weights of the combined MSE + squared-relative-error loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParams {
    pub alpha1: f64,
    pub alpha2: f64,
}

impl LossParams {
    pub fn new(alpha1: f64, alpha2: f64) -> Result<Self> {
        if !(alpha1 >= 0.0 && alpha2 >= 0.0) || (alpha1 == 0.0 && alpha2 == 0.0) {
            return Err(Error::InvalidParam(format!(
                "loss weights must be nonnegative and not both zero, got ({alpha1}, {alpha2})"
            )));
        }
        Ok(LossParams { alpha1, alpha2 })
    }
}

impl Default for LossParams {
    fn default() -> Self {
        LossParams {
            alpha1: 1.0,
            alpha2: 2.0,
        }
    }
}

/// Loss value and its gradient with respect to the prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput<T = f32> {
    pub value: f64,
    pub grad: Tensor4<T>,
}

fn grad_from<T: Element>(like: &Tensor4<T>, grad: Vec<f64>) -> Tensor4<T> {
    Tensor4::from_vec(like.shape(), grad.into_iter().map(T::from_f64).collect())
        .expect("gradient has the prediction's shape")
}

/// `alpha1 * mean((g - d)^2) + alpha2 * mean((1 - d / g)^2)` over valid pixels.
pub fn mse_rel_loss<T: Element>(
    pair: &DepthPair<'_, T>,
    params: &LossParams,
) -> Result<LossOutput<T>> {
    let params = LossParams::new(params.alpha1, params.alpha2)?;
    let count = pair.valid_count();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let inv_n = 1.0 / count as f64;
    let mut mse = 0.0;
    let mut rel = 0.0;
    let mut grad = vec![0.0; pair.prediction.shape().len()];
    for (i, d, g) in pair.valid_pixels() {
        let e = g - d;
        let r = 1.0 - d / g;
        mse += e * e;
        rel += r * r;
        grad[i] = inv_n * (-2.0 * params.alpha1 * e - 2.0 * params.alpha2 * r / g);
    }
    Ok(LossOutput {
        value: params.alpha1 * mse * inv_n + params.alpha2 * rel * inv_n,
        grad: grad_from(pair.prediction, grad),
    })
}

fn check_threshold(k: f64) -> Result<()> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidParam(format!(
            "BerHu threshold must be positive, got {k}"
        )));
    }
    Ok(())
}

// The two branches of the reverse Huber penalty in the residual `e = g - d`,
// each with its derivative in `e`.
fn berhu_linear(e: f64) -> (f64, f64) {
    let slope = if e > 0.0 {
        1.0
    } else if e < 0.0 {
        -1.0
    } else {
        0.0
    };
    (e.abs(), slope)
}

fn berhu_quadratic(e: f64, k: f64) -> (f64, f64) {
    ((e * e + k * k) / (2.0 * k), e / k)
}

/// Per-pixel reverse Huber penalty of residual `e`: `|e|` below `k`,
/// `(e^2 + k^2) / 2k` from `k` on.
pub fn berhu_pixel(e: f64, k: f64) -> f64 {
    if e.abs() < k {
        berhu_linear(e).0
    } else {
        berhu_quadratic(e, k).0
    }
}

/// Derivative of [`berhu_pixel`] with respect to the residual; 0 at `e = 0`.
pub fn berhu_pixel_slope(e: f64, k: f64) -> f64 {
    if e.abs() < k {
        berhu_linear(e).1
    } else {
        berhu_quadratic(e, k).1
    }
}

/// Mean reverse Huber loss with threshold `k` over valid pixels.
pub fn berhu_loss<T: Element>(pair: &DepthPair<'_, T>, k: f64) -> Result<LossOutput<T>> {
    check_threshold(k)?;
    let count = pair.valid_count();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let inv_n = 1.0 / count as f64;
    let mut sum = 0.0;
    let mut grad = vec![0.0; pair.prediction.shape().len()];
    for (i, d, g) in pair.valid_pixels() {
        let e = g - d;
        sum += berhu_pixel(e, k);
        // de/dd = -1
        grad[i] = -berhu_pixel_slope(e, k) * inv_n;
    }
    Ok(LossOutput {
        value: sum * inv_n,
        grad: grad_from(pair.prediction, grad),
    })
}

/// Threshold controller for the adaptive BerHu loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptiveBerHuState {
    /// Current threshold, meters.
    pub k: f64,
    /// Half-width of the two depth bands around `k`, meters.
    pub delta: f64,
    /// Fraction of `delta` by which `k` moves per step.
    pub lr: f64,
}

impl AdaptiveBerHuState {
    pub fn new(k: f64, delta: f64, lr: f64) -> Result<Self> {
        let s = AdaptiveBerHuState { k, delta, lr };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("k", self.k), ("delta", self.delta), ("lr", self.lr)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for AdaptiveBerHuState {
    fn default() -> Self {
        AdaptiveBerHuState {
            k: 1.0,
            delta: 1.0,
            lr: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveBerHuStep<T = f32> {
    /// BerHu value and gradient at the incoming threshold.
    pub loss: LossOutput<T>,
    pub state: AdaptiveBerHuState,
    /// Mean per-pixel BerHu of pixels with ground truth in `[k - delta, k]`.
    pub low_band: Option<f64>,
    /// Mean per-pixel BerHu of pixels with ground truth in `[k, k + delta]`.
    pub high_band: Option<f64>,
}

/// One adaptive BerHu step: evaluates BerHu at the current `k`, compares the
/// mean penalty of the depth bands just below and just above `k`, and moves
/// `k` by `lr * delta` toward the band with the larger error. Ties and empty
/// bands leave `k` alone, as does a step that would make `k` nonpositive.
pub fn aberhu_step<T: Element>(
    pair: &DepthPair<'_, T>,
    state: &AdaptiveBerHuState,
) -> Result<AdaptiveBerHuStep<T>> {
    state.validate()?;
    let loss = berhu_loss(pair, state.k)?;
    let k = state.k;
    let (mut low, mut high) = ((0.0, 0usize), (0.0, 0usize));
    for (_, d, g) in pair.valid_pixels() {
        let penalty = berhu_pixel(g - d, k);
        if g >= k - state.delta && g <= k {
            low.0 += penalty;
            low.1 += 1;
        }
        if g >= k && g <= k + state.delta {
            high.0 += penalty;
            high.1 += 1;
        }
    }
    let mean = |(sum, n): (f64, usize)| (n > 0).then(|| sum / n as f64);
    let (low_band, high_band) = (mean(low), mean(high));
    let step = state.lr * state.delta;
    let mut next = *state;
    if let (Some(lo), Some(hi)) = (low_band, high_band) {
        let candidate = if hi > lo {
            k + step
        } else if hi < lo {
            k - step
        } else {
            k
        };
        if candidate > 0.0 {
            next.k = candidate;
        }
    }
    Ok(AdaptiveBerHuStep {
        loss,
        state: next,
        low_band,
        high_band,
    })
}
