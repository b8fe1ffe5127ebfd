//! Up-convolution decoder block: zero-insertion unpooling, 5x5 convolution,
//! batch norm and ReLU (dropout is the identity at inference time).
//!
//! On the zero-stuffed grid only the taps whose row/column offsets from the
//! kernel centre have the same parity as the output pixel ever see data, so
//! the 5x5 kernel falls apart into four dense kernels applied at the input
//! resolution:
//!
//! | output parity (row, col) | kernel taps `w[a][b]`     | extent | padding (t, b, l, r) |
//! |--------------------------|---------------------------|--------|----------------------|
//! | even, even               | `a, b` in {0, 2, 4}       | 3x3    | 1, 1, 1, 1           |
//! | even, odd                | `a` in {0,2,4}, `b` in {1,3} | 3x2 | 1, 1, 0, 1           |
//! | odd, even                | `a` in {1,3}, `b` in {0,2,4} | 2x3 | 0, 1, 1, 1           |
//! | odd, odd                 | `a, b` in {1, 3}          | 2x2    | 0, 1, 0, 1           |
//!
//! Interleaving the four branch outputs reproduces the naive block.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::interleave::{interleave4, InterleaveInputs};
use crate::ops::{batchnorm_infer, conv2d, conv2d_macs, relu, resample, Padding, Pads, Resample};
use crate::tensor::{BatchNormParams, ConvKernel, Element, Shape4, Tensor4};

/// Branch paddings in interleave order (even/even, even/odd, odd/even, odd/odd).
pub const BRANCH_PADDING: [Pads; 4] = [
    Pads::new(1, 1, 1, 1),
    Pads::new(1, 1, 0, 1),
    Pads::new(0, 1, 1, 1),
    Pads::new(0, 1, 0, 1),
];

/// Branch kernel extents `(rows, cols)` in interleave order.
pub const BRANCH_EXTENTS: [(usize, usize); 4] = [(3, 3), (3, 2), (2, 3), (2, 2)];

const BRANCH_NAMES: [&str; 4] = ["3x3", "3x2", "2x3", "2x2"];

#[derive(Clone, Debug, PartialEq)]
pub struct UpConvWeights<T = f32> {
    pub full: ConvKernel<T>,
    pub bn: BatchNormParams<T>,
}

impl<T: Element> UpConvWeights<T> {
    pub fn new(full: ConvKernel<T>, bn: BatchNormParams<T>) -> Result<Self> {
        check_5x5(&full)?;
        if bn.channels() != full.cout() {
            return Err(Error::ParamLength {
                got: bn.channels(),
                expected: full.cout(),
            });
        }
        Ok(UpConvWeights { full, bn })
    }

    /// Random kernel with weights in `±1/sqrt(25 cin)` and near-identity batch norm.
    pub fn random<R: Rng + ?Sized>(cin: usize, cout: usize, rng: &mut R) -> Self {
        let scale = 1.0 / ((25 * cin) as f64).sqrt();
        UpConvWeights {
            full: ConvKernel::random(5, 5, cin, cout, scale, false, rng),
            bn: BatchNormParams::random(cout, rng),
        }
    }
}

/// The four branch kernels of the interleaved block, sharing one batch norm.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitUpConvWeights<T = f32> {
    pub k33: ConvKernel<T>,
    pub k32: ConvKernel<T>,
    pub k23: ConvKernel<T>,
    pub k22: ConvKernel<T>,
    pub bn: BatchNormParams<T>,
}

impl<T: Element> SplitUpConvWeights<T> {
    pub fn branches(&self) -> [&ConvKernel<T>; 4] {
        [&self.k33, &self.k32, &self.k23, &self.k22]
    }
}

fn check_5x5<T: Element>(k: &ConvKernel<T>) -> Result<()> {
    if k.kh() != 5 || k.kw() != 5 {
        return Err(Error::KernelExtent {
            kh: k.kh(),
            kw: k.kw(),
            expected: "5x5",
        });
    }
    Ok(())
}

/// `relu(bn(conv5x5(unpool(x))))` from separately held parameters.
pub fn upconv_naive<T: Element>(
    input: &Tensor4<T>,
    full: &ConvKernel<T>,
    bn: &BatchNormParams<T>,
) -> Result<Tensor4<T>> {
    check_5x5(full)?;
    if input.shape().c != full.cin() {
        return Err(Error::ChannelMismatch {
            input: input.shape().c,
            kernel: full.cin(),
        });
    }
    let unpooled = resample(input, Resample::UnpoolZero2)?;
    let y = conv2d(&unpooled, full, 1, Padding::Same)?;
    Ok(relu(&batchnorm_infer(&y, bn)?))
}

pub fn upconv_block_naive<T: Element>(
    input: &Tensor4<T>,
    weights: &UpConvWeights<T>,
) -> Result<Tensor4<T>> {
    upconv_naive(input, &weights.full, &weights.bn)
}

/// Interleaved block from separately held parameters; `branches` in
/// interleave order (3x3, 3x2, 2x3, 2x2).
pub fn upconv_fast<T: Element>(
    input: &Tensor4<T>,
    branches: [&ConvKernel<T>; 4],
    bn: &BatchNormParams<T>,
) -> Result<Tensor4<T>> {
    let cout = branches[0].cout();
    for ((k, &extent), name) in branches.iter().zip(&BRANCH_EXTENTS).zip(BRANCH_NAMES) {
        if (k.kh(), k.kw()) != extent {
            return Err(Error::KernelExtent {
                kh: k.kh(),
                kw: k.kw(),
                expected: name,
            });
        }
        if k.cin() != input.shape().c {
            return Err(Error::ChannelMismatch {
                input: input.shape().c,
                kernel: k.cin(),
            });
        }
        if k.cout() != cout {
            return Err(Error::InvalidKernel(format!(
                "branch kernels disagree on output channels ({} vs {cout})",
                k.cout()
            )));
        }
    }
    let mut parts = Vec::with_capacity(4);
    for (k, pads) in branches.iter().zip(BRANCH_PADDING) {
        parts.push(conv2d(input, k, 1, Padding::Explicit(pads))?);
    }
    let merged = interleave4(&InterleaveInputs::new(
        &parts[0], &parts[1], &parts[2], &parts[3],
    )?);
    Ok(relu(&batchnorm_infer(&merged, bn)?))
}

pub fn upconv_block_fast<T: Element>(
    input: &Tensor4<T>,
    weights: &SplitUpConvWeights<T>,
) -> Result<Tensor4<T>> {
    upconv_fast(input, weights.branches(), &weights.bn)
}

/// Extracts the taps of `full` at rows `row0, row0 + 2, ..` and columns
/// `col0, col0 + 2, ..`.
fn sub_kernel<T: Element>(full: &ConvKernel<T>, row0: usize, col0: usize) -> ConvKernel<T> {
    let rows = (5 - row0).div_ceil(2);
    let cols = (5 - col0).div_ceil(2);
    let k = ConvKernel::from_fn(rows, cols, full.cin(), full.cout(), |u, v, ci, co| {
        full.at(row0 + 2 * u, col0 + 2 * v, ci, co)
    });
    match full.bias() {
        Some(b) => k.with_bias(b.to_vec()).expect("bias length matches cout"),
        None => k,
    }
}

/// Rearranges a 5x5 up-convolution kernel into the four branch kernels by
/// the parity of each tap's offset from the kernel centre. Any bias is
/// copied to every branch, since each output pixel comes from exactly one.
pub fn split_weights_5x5<T: Element>(weights: &UpConvWeights<T>) -> Result<SplitUpConvWeights<T>> {
    check_5x5(&weights.full)?;
    Ok(SplitUpConvWeights {
        k33: sub_kernel(&weights.full, 0, 0),
        k32: sub_kernel(&weights.full, 0, 1),
        k23: sub_kernel(&weights.full, 1, 0),
        k22: sub_kernel(&weights.full, 1, 1),
        bn: weights.bn.clone(),
    })
}

/// Inverse of [`split_weights_5x5`].
pub fn merge_split_weights<T: Element>(split: &SplitUpConvWeights<T>) -> Result<UpConvWeights<T>> {
    for (k, &(kh, kw)) in split.branches().iter().zip(&BRANCH_EXTENTS) {
        if (k.kh(), k.kw()) != (kh, kw)
            || k.cin() != split.k33.cin()
            || k.cout() != split.k33.cout()
        {
            return Err(Error::InvalidKernel(format!(
                "branch kernel {}x{}x{}x{} does not fit a split 5x5 kernel",
                k.kh(),
                k.kw(),
                k.cin(),
                k.cout()
            )));
        }
    }
    let full = ConvKernel::from_fn(5, 5, split.k33.cin(), split.k33.cout(), |a, b, ci, co| {
        let k = match (a % 2, b % 2) {
            (0, 0) => &split.k33,
            (0, _) => &split.k32,
            (_, 0) => &split.k23,
            _ => &split.k22,
        };
        k.at(a / 2, b / 2, ci, co)
    });
    let full = match split.k33.bias() {
        Some(b) => full.with_bias(b.to_vec())?,
        None => full,
    };
    UpConvWeights::new(full, split.bn.clone())
}

/// Multiply-accumulates of the naive block (dense 5x5 over the unpooled grid).
pub fn upconv_macs_naive(input: Shape4, cout: usize) -> u64 {
    let up = input.with_spatial(2 * input.h, 2 * input.w);
    conv2d_macs(up, 5, 5, cout, 1, Padding::Same).expect("same padding never empties")
}

/// Multiply-accumulates of the interleaved block (four dense branches).
pub fn upconv_macs_fast(input: Shape4, cout: usize) -> u64 {
    BRANCH_EXTENTS
        .iter()
        .zip(BRANCH_PADDING)
        .map(|(&(kh, kw), p)| {
            conv2d_macs(input, kh, kw, cout, 1, Padding::Explicit(p))
                .expect("branch geometry is valid")
        })
        .sum()
}

/// Largest absolute difference between the naive block and the interleaved
/// block built by `split`.
pub fn equivalence_gap_with<T: Element>(
    input: &Tensor4<T>,
    weights: &UpConvWeights<T>,
    split: impl Fn(&UpConvWeights<T>) -> Result<SplitUpConvWeights<T>>,
) -> Result<T> {
    let naive = upconv_block_naive(input, weights)?;
    let fast = upconv_block_fast(input, &split(weights)?)?;
    naive.max_abs_diff(&fast).ok_or(Error::ShapeMismatch {
        left: naive.shape(),
        right: fast.shape(),
    })
}

pub fn equivalence_gap<T: Element>(input: &Tensor4<T>, weights: &UpConvWeights<T>) -> Result<T> {
    equivalence_gap_with(input, weights, split_weights_5x5)
}

/// Random input of shape `input` and random `input.c -> cout` weights drawn
/// from `seed`, evaluated in precision `T`.
pub fn verify_equivalence_with<T: Element>(
    input: Shape4,
    cout: usize,
    seed: u64,
    split: impl Fn(&UpConvWeights<T>) -> Result<SplitUpConvWeights<T>>,
) -> Result<T> {
    if !input.is_valid() || cout == 0 {
        return Err(Error::InvalidShape(input.with_channels(cout)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor4::<T>::random(input, -1.0, 1.0, &mut rng);
    let weights = UpConvWeights::<T>::random(input.c, cout, &mut rng);
    equivalence_gap_with(&x, &weights, split)
}

/// Max |naive - fast| in `f32` for seeded random data.
pub fn verify_equivalence(input: Shape4, cout: usize, seed: u64) -> Result<f32> {
    verify_equivalence_with::<f32>(input, cout, seed, split_weights_5x5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn delta_kernel_lands_in_the_centre_of_k33() {
        let full = ConvKernel::from_fn(
            5,
            5,
            1,
            1,
            |a, b, _, _| if (a, b) == (2, 2) { 1.0f32 } else { 0.0 },
        );
        let w = UpConvWeights::new(full, BatchNormParams::identity(1)).unwrap();
        let s = split_weights_5x5(&w).unwrap();
        assert_eq!(s.k33.at(1, 1, 0, 0), 1.0);
        assert_eq!(s.k33.weights().iter().filter(|&&v| v != 0.0).count(), 1);
        for k in [&s.k32, &s.k23, &s.k22] {
            assert!(k.weights().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn parity_class_sizes() {
        let full = ConvKernel::from_fn(5, 5, 1, 1, |_, _, _, _| 1.0f32);
        let s = split_weights_5x5(&UpConvWeights::new(full, BatchNormParams::identity(1)).unwrap())
            .unwrap();
        let counts: Vec<usize> = s.branches().iter().map(|k| k.weights().len()).collect();
        assert_eq!(counts, vec![9, 6, 6, 4]);
        assert_eq!(counts.iter().sum::<usize>(), 25);
    }

    #[test]
    fn rejects_non_5x5() {
        let k = ConvKernel::<f32>::zeros(3, 3, 1, 1);
        assert!(UpConvWeights::new(k.clone(), BatchNormParams::identity(1)).is_err());
        let w = UpConvWeights {
            full: k,
            bn: BatchNormParams::identity(1),
        };
        assert!(matches!(
            split_weights_5x5(&w),
            Err(Error::KernelExtent { .. })
        ));
    }

    #[test]
    fn zero_input_passes_nonnegative_betas() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut w = UpConvWeights::<f32>::random(2, 3, &mut rng);
        w.bn.beta = vec![0.25, -0.5, 1.0];
        let x = Tensor4::zeros(Shape4::new(1, 3, 2, 2));
        let y = upconv_block_naive(&x, &w).unwrap();
        assert_eq!(y.shape(), Shape4::new(1, 6, 4, 3));
        for px in y.data().chunks(3) {
            // (0 - mean) * gamma / std + beta, then relu
            for (c, &v) in px.iter().enumerate() {
                let bn = &w.bn;
                let want = (bn.gamma[c] * (0.0 - bn.mean[c]) / (bn.variance[c] + bn.eps).sqrt()
                    + bn.beta[c])
                    .max(0.0);
                assert_eq!(v, want);
            }
        }
    }

    #[test]
    fn naive_block_is_the_primitive_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = Tensor4::<f32>::random(Shape4::new(2, 3, 4, 3), -1.0, 1.0, &mut rng);
        let w = UpConvWeights::<f32>::random(3, 2, &mut rng);
        let unpooled = resample(&x, Resample::UnpoolZero2).unwrap();
        let conv = conv2d(&unpooled, &w.full, 1, Padding::Same).unwrap();
        let want = relu(&batchnorm_infer(&conv, &w.bn).unwrap());
        assert_eq!(upconv_block_naive(&x, &w).unwrap(), want);
    }

    #[test]
    fn fast_matches_naive_on_small_inputs() {
        for seed in 0..10 {
            let gap = verify_equivalence(Shape4::new(1, 4, 4, 2), 3, seed).unwrap();
            assert!(gap <= 1e-5, "seed {seed}: {gap}");
        }
    }

    #[test]
    fn delta_kernel_fast_path_scatters_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let full = ConvKernel::from_fn(
            5,
            5,
            1,
            1,
            |a, b, _, _| if (a, b) == (2, 2) { 1.0f32 } else { 0.0 },
        );
        let w = UpConvWeights::new(full, BatchNormParams::random(1, &mut rng)).unwrap();
        let x = Tensor4::<f32>::random(Shape4::new(1, 3, 5, 1), -1.0, 1.0, &mut rng);
        let fast = upconv_block_fast(&x, &split_weights_5x5(&w).unwrap()).unwrap();
        let scattered = resample(&x, Resample::UnpoolZero2).unwrap();
        assert_eq!(fast, relu(&batchnorm_infer(&scattered, &w.bn).unwrap()));
        assert_eq!(fast, upconv_block_naive(&x, &w).unwrap());
    }

    #[test]
    fn biased_kernels_stay_equivalent() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut w = UpConvWeights::<f32>::random(2, 2, &mut rng);
        w.full = w.full.with_bias(vec![0.3, -0.2]).unwrap();
        let x = Tensor4::<f32>::random(Shape4::new(1, 5, 3, 2), -1.0, 1.0, &mut rng);
        assert!(equivalence_gap(&x, &w).unwrap() <= 1e-5);
        assert_eq!(
            merge_split_weights(&split_weights_5x5(&w).unwrap()).unwrap(),
            w
        );
    }

    #[test]
    fn verify_is_deterministic_and_zero_weights_give_zero() {
        let s = Shape4::new(1, 3, 3, 2);
        assert_eq!(
            verify_equivalence(s, 2, 42).unwrap(),
            verify_equivalence(s, 2, 42).unwrap()
        );
        let w =
            UpConvWeights::<f32>::new(ConvKernel::zeros(5, 5, 2, 2), BatchNormParams::identity(2))
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor4::<f32>::random(s, -1.0, 1.0, &mut rng);
        assert_eq!(equivalence_gap(&x, &w).unwrap(), 0.0);
    }

    #[test]
    fn fast_path_needs_a_quarter_of_the_macs() {
        let s = Shape4::new(1, 6, 7, 4);
        assert_eq!(upconv_macs_naive(s, 3), 4 * 6 * 7 * 25 * 4 * 3);
        assert_eq!(upconv_macs_fast(s, 3), 6 * 7 * (9 + 6 + 6 + 4) * 4 * 3);
        assert!(upconv_macs_fast(s, 3) < upconv_macs_naive(s, 3));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn equivalence_over_random_shapes(
            h in 2usize..13, w in 2usize..13, cin in 1usize..9, cout in 1usize..9, seed in any::<u64>()
        ) {
            let gap = verify_equivalence(Shape4::new(1, h, w, cin), cout, seed).unwrap();
            prop_assert!(gap <= 1e-5, "gap {}", gap);
        }

        #[test]
        fn split_is_a_permutation_of_the_weights(cin in 1usize..5, cout in 1usize..5, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = UpConvWeights::<f32>::random(cin, cout, &mut rng);
            let s = split_weights_5x5(&w).unwrap();
            let mut split: Vec<u32> = s.branches().iter().flat_map(|k| k.weights().iter().map(|v| v.to_bits())).collect();
            let mut orig: Vec<u32> = w.full.weights().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(split.len(), 25 * cin * cout);
            split.sort_unstable();
            orig.sort_unstable();
            prop_assert_eq!(split, orig);
            prop_assert_eq!(merge_split_weights(&s).unwrap(), w);
        }
    }
}
