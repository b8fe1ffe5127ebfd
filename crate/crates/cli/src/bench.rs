//! Wall-clock benchmarks of whole models and single decoder blocks.

use std::fmt;
use std::hint::black_box;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Result};
use fcdepth_core::arch::{build_model, infer, ModelSpec, WeightContainer};
use fcdepth_core::upconv::{
    split_weights_5x5, upconv_block_fast, upconv_block_naive, upconv_macs_fast, upconv_macs_naive,
    UpConvWeights,
};
use fcdepth_core::{Shape4, Tensor4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const SCHEMA: &str = "fcdepth.bench/1";
pub const MIN_ITERATIONS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    UpconvNaive,
    UpconvFast,
}

impl FromStr for BlockKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "upconv_naive" => Ok(BlockKind::UpconvNaive),
            "upconv_fast" => Ok(BlockKind::UpconvFast),
            _ => bail!("unknown block `{s}`, expected upconv_naive or upconv_fast"),
        }
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockKind::UpconvNaive => "upconv_naive",
            BlockKind::UpconvFast => "upconv_fast",
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub enum BenchTarget {
    Model(ModelSpec),
    /// One up-convolution block on an input of shape `input`.
    Block {
        kind: BlockKind,
        input: Shape4,
        cout: usize,
    },
}

impl BenchTarget {
    pub fn name(&self) -> String {
        match self {
            BenchTarget::Model(spec) => spec.to_string(),
            BenchTarget::Block { kind, input, cout } => {
                format!("{kind}:{}x{}:{}->{cout}", input.w, input.h, input.c)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema: String,
    pub target: String,
    pub kind: String,
    /// Width and height of the benchmarked input.
    pub width: usize,
    pub height: usize,
    pub warmup: usize,
    pub iterations: usize,
    pub mean_s: f64,
    pub min_s: f64,
    pub p50_s: f64,
    pub p95_s: f64,
    pub max_s: f64,
    pub macs: u64,
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({}x{}): mean {:.4}s  min {:.4}s  p50 {:.4}s  p95 {:.4}s  over {} iterations, {:.3} GMAC",
            self.target,
            self.width,
            self.height,
            self.mean_s,
            self.min_s,
            self.p50_s,
            self.p95_s,
            self.iterations,
            self.macs as f64 / 1e9
        )
    }
}

/// Nearest-rank percentile of sorted samples.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = (p / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

type Job = Box<dyn FnMut() -> Result<()>>;

struct Prepared {
    kind: &'static str,
    width: usize,
    height: usize,
    macs: u64,
    job: Job,
}

fn prepare(target: &BenchTarget, seed: u64) -> Result<Prepared> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match *target {
        BenchTarget::Model(spec) => {
            let graph = build_model(&spec)?;
            let weights = WeightContainer::random_for(&graph, seed);
            let x = Tensor4::random(graph.input_shape(), 0.0, 1.0, &mut rng);
            Prepared {
                kind: "model",
                width: spec.input_w,
                height: spec.input_h,
                macs: graph.macs(),
                job: Box::new(move || {
                    black_box(infer(&graph, &weights, black_box(&x))?);
                    Ok(())
                }),
            }
        }
        BenchTarget::Block { kind, input, cout } => {
            let x = Tensor4::<f32>::random(input, -1.0, 1.0, &mut rng);
            let weights = UpConvWeights::random(input.c, cout, &mut rng);
            let (macs, job): (u64, Job) = match kind {
                BlockKind::UpconvNaive => (
                    upconv_macs_naive(input, cout),
                    Box::new(move || {
                        black_box(upconv_block_naive(black_box(&x), &weights)?);
                        Ok(())
                    }),
                ),
                BlockKind::UpconvFast => {
                    // Weight transfer happens once, outside the timed region.
                    let split = split_weights_5x5(&weights)?;
                    (
                        upconv_macs_fast(input, cout),
                        Box::new(move || {
                            black_box(upconv_block_fast(black_box(&x), &split)?);
                            Ok(())
                        }),
                    )
                }
            };
            Prepared {
                kind: "block",
                width: input.w,
                height: input.h,
                macs,
                job,
            }
        }
    })
}

pub fn run(
    target: &BenchTarget,
    warmup: usize,
    iterations: usize,
    seed: u64,
) -> Result<BenchReport> {
    Ok(run_interleaved(std::slice::from_ref(target), warmup, iterations, seed)?.remove(0))
}

/// Benchmarks several targets round-robin, one iteration of each per round,
/// so that slow drift in machine load affects all of them alike.
pub fn run_interleaved(
    targets: &[BenchTarget],
    warmup: usize,
    iterations: usize,
    seed: u64,
) -> Result<Vec<BenchReport>> {
    if iterations < MIN_ITERATIONS {
        bail!("at least {MIN_ITERATIONS} iterations are required, got {iterations}");
    }
    let mut prepared = targets
        .iter()
        .map(|t| prepare(t, seed))
        .collect::<Result<Vec<_>>>()?;
    for _ in 0..warmup {
        for p in &mut prepared {
            (p.job)()?;
        }
    }
    let mut samples = vec![Vec::with_capacity(iterations); targets.len()];
    for _ in 0..iterations {
        for (p, s) in prepared.iter_mut().zip(&mut samples) {
            let t = Instant::now();
            (p.job)()?;
            s.push(t.elapsed().as_secs_f64());
        }
    }
    Ok(targets
        .iter()
        .zip(prepared)
        .zip(samples)
        .map(|((target, p), samples)| {
            let mut sorted = samples.clone();
            sorted.sort_by(f64::total_cmp);
            BenchReport {
                schema: SCHEMA.to_string(),
                target: target.name(),
                kind: p.kind.to_string(),
                width: p.width,
                height: p.height,
                warmup,
                iterations,
                mean_s: samples.iter().sum::<f64>() / samples.len() as f64,
                min_s: sorted[0],
                p50_s: percentile(&sorted, 50.0),
                p95_s: percentile(&sorted, 95.0),
                max_s: sorted[sorted.len() - 1],
                macs: p.macs,
            }
        })
        .collect())
}
