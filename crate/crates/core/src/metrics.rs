//! Depth accuracy metrics: MSE, mean absolute relative error and the
//! δ-threshold accuracies at `1.25`, `1.25^2` and `1.25^3`.

use crate::error::{Error, Result};
use crate::loss::DepthPair;
use crate::tensor::Element;

/// Base of the threshold accuracies.
pub const DELTA_BASE: f64 = 1.25;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    /// Number of valid pixels the report is computed over.
    pub pixels: usize,
    pub mse: f64,
    /// Mean of `|g - d| / g`.
    pub rel: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

/// Running sums for metrics over many pairs; pixels are pooled, not pairs.
#[derive(Clone, Debug, Default)]
pub struct MetricsAccumulator {
    pixels: usize,
    sum_sq: f64,
    sum_rel: f64,
    hits: [usize; 3],
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add<T: Element>(&mut self, pair: &DepthPair<'_, T>) {
        let thresholds = [DELTA_BASE, DELTA_BASE.powi(2), DELTA_BASE.powi(3)];
        for (_, d, g) in pair.valid_pixels() {
            let e = g - d;
            self.pixels += 1;
            self.sum_sq += e * e;
            self.sum_rel += e.abs() / g;
            let ratio = if d > 0.0 {
                (g / d).max(d / g)
            } else {
                f64::INFINITY
            };
            for (hit, t) in self.hits.iter_mut().zip(thresholds) {
                if ratio < t {
                    *hit += 1;
                }
            }
        }
    }

    pub fn finish(&self) -> Result<MetricsReport> {
        if self.pixels == 0 {
            return Err(Error::EmptyMask);
        }
        let n = self.pixels as f64;
        Ok(MetricsReport {
            pixels: self.pixels,
            mse: self.sum_sq / n,
            rel: self.sum_rel / n,
            delta1: self.hits[0] as f64 / n,
            delta2: self.hits[1] as f64 / n,
            delta3: self.hits[2] as f64 / n,
        })
    }
}

/// Metrics of a single pair. A nonpositive prediction fails every threshold.
pub fn compute_metrics<T: Element>(pair: &DepthPair<'_, T>) -> Result<MetricsReport> {
    let mut acc = MetricsAccumulator::new();
    acc.add(pair);
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Shape4, Tensor4};

    fn map(v: &[f32]) -> Tensor4<f32> {
        Tensor4::from_vec(Shape4::new(1, 1, v.len(), 1), v.to_vec()).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let g = map(&[0.5, 2.0, 9.0]);
        let m = compute_metrics(&DepthPair::new(&g, &g).unwrap()).unwrap();
        assert_eq!((m.mse, m.rel), (0.0, 0.0));
        assert_eq!((m.delta1, m.delta2, m.delta3), (1.0, 1.0, 1.0));
    }

    #[test]
    fn three_pixel_thresholds() {
        // ratios 1, 1.2, 2: only the last misses every threshold (1.25^3 < 2).
        let g = map(&[1.0, 2.0, 4.0]);
        let d = map(&[1.0, 2.4, 8.0]);
        let m = compute_metrics(&DepthPair::new(&d, &g).unwrap()).unwrap();
        assert_eq!(m.delta1, 2.0 / 3.0);
        assert_eq!(m.delta2, 2.0 / 3.0);
        assert_eq!(m.delta3, 2.0 / 3.0);
    }

    #[test]
    fn nonpositive_prediction_fails_all_thresholds() {
        let g = map(&[1.0, 1.0]);
        let d = map(&[0.0, -1.0]);
        let m = compute_metrics(&DepthPair::new(&d, &g).unwrap()).unwrap();
        assert_eq!((m.delta1, m.delta2, m.delta3), (0.0, 0.0, 0.0));
    }

    #[test]
    fn empty_mask() {
        let g = map(&[0.0]);
        assert!(matches!(
            compute_metrics(&DepthPair::new(&g, &g).unwrap()),
            Err(Error::EmptyMask)
        ));
    }
}
