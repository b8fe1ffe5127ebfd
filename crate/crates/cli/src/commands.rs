use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use fcdepth_core::arch::{build_model, convert_upconv_weights, infer, ModelSpec, WeightContainer};
use fcdepth_core::interleave::{interleave4, interleave4_reference, InterleaveInputs};
use fcdepth_core::loss::DepthPair;
use fcdepth_core::metrics::MetricsAccumulator;
use fcdepth_core::upconv::{
    split_weights_5x5, verify_equivalence_with, SplitUpConvWeights, UpConvWeights,
};
use fcdepth_core::{ConvKernel, Element, Shape4, Tensor4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ppm::RgbImage;
use crate::raster::DepthRaster;
use crate::synth;

/// Resolution assumed when a model string names none and no image fixes it.
pub const DEFAULT_RESOLUTION: (usize, usize) = (320, 240);

pub const F32_TOLERANCE: f64 = 1e-5;
pub const F64_TOLERANCE: f64 = 1e-10;

pub fn infer_file(model: &str, weights: &Path, input: &Path, output: &Path) -> Result<()> {
    let image = RgbImage::load(input)?;
    let spec = ModelSpec::parse(model, Some((image.width, image.height)))?;
    ensure!(
        (spec.input_w, spec.input_h) == (image.width, image.height),
        "{}: image is {}x{} but model {spec} expects {}x{}",
        input.display(),
        image.width,
        image.height,
        spec.input_w,
        spec.input_h
    );
    let graph = build_model(&spec)?;
    let weights =
        WeightContainer::load(weights).with_context(|| format!("reading {}", weights.display()))?;
    let depth = infer(&graph, &weights, &image.to_tensor())?;
    DepthRaster::from_tensor(&depth)?.save(output)?;
    Ok(())
}

pub fn init_weights(model: &str, seed: u64, out: &Path) -> Result<usize> {
    let spec = ModelSpec::parse(model, Some(DEFAULT_RESOLUTION))?;
    let weights = WeightContainer::random_for(&build_model(&spec)?, seed);
    weights
        .save(out)
        .with_context(|| format!("writing {}", out.display()))?;
    Ok(weights.len())
}

pub fn convert(input: &Path, out: &Path) -> Result<usize> {
    let naive =
        WeightContainer::load(input).with_context(|| format!("reading {}", input.display()))?;
    let fast = convert_upconv_weights(&naive)
        .with_context(|| format!("converting {}", input.display()))?;
    fast.save(out)
        .with_context(|| format!("writing {}", out.display()))?;
    Ok(fast.len())
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub seeds: u64,
    pub worst_f32: f64,
    pub worst_f64: f64,
    pub interleave_mismatches: usize,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.worst_f32 <= F32_TOLERANCE
            && self.worst_f64 <= F64_TOLERANCE
            && self.interleave_mismatches == 0
    }
}

/// Splits correctly, then reverses the taps of every branch kernel.
fn faulty_split<T: Element>(w: &UpConvWeights<T>) -> fcdepth_core::Result<SplitUpConvWeights<T>> {
    let s = split_weights_5x5(w)?;
    let flip = |k: &ConvKernel<T>| {
        ConvKernel::from_fn(k.kh(), k.kw(), k.cin(), k.cout(), |a, b, ci, co| {
            k.at(k.kh() - 1 - a, k.kw() - 1 - b, ci, co)
        })
    };
    Ok(SplitUpConvWeights {
        k33: flip(&s.k33),
        k32: flip(&s.k32),
        k23: flip(&s.k23),
        k22: flip(&s.k22),
        bn: s.bn,
    })
}

/// Checks the interleaved up-convolution against the naive one (in `f32` and
/// `f64`) and the single-pass interleave against the three-step reference,
/// one random case per seed.
pub fn verify(seeds: u64, inject_fault: bool) -> Result<VerifyReport> {
    ensure!(seeds >= 1, "--seeds must be at least 1");
    let mut report = VerifyReport {
        seeds,
        worst_f32: 0.0,
        worst_f64: 0.0,
        interleave_mismatches: 0,
    };
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = Shape4::new(
            rng.gen_range(1..=2),
            rng.gen_range(1..=10),
            rng.gen_range(1..=10),
            rng.gen_range(1..=8),
        );
        let cout = rng.gen_range(1..=8);
        let (g32, g64) = if inject_fault {
            (
                verify_equivalence_with::<f32>(input, cout, seed, faulty_split)?,
                verify_equivalence_with::<f64>(input, cout, seed, faulty_split)?,
            )
        } else {
            (
                verify_equivalence_with::<f32>(input, cout, seed, split_weights_5x5)?,
                verify_equivalence_with::<f64>(input, cout, seed, split_weights_5x5)?,
            )
        };
        report.worst_f32 = report.worst_f32.max(g32 as f64);
        report.worst_f64 = report.worst_f64.max(g64);

        let q = Shape4::new(
            rng.gen_range(1..=4),
            rng.gen_range(1..=16),
            rng.gen_range(1..=16),
            rng.gen_range(1..=8),
        );
        let parts: Vec<Tensor4> = (0..4)
            .map(|_| Tensor4::random(q, -1.0, 1.0, &mut rng))
            .collect();
        let inputs = InterleaveInputs::new(&parts[0], &parts[1], &parts[2], &parts[3])?;
        let (a, b) = (interleave4(&inputs), interleave4_reference(&inputs));
        if a.data()
            .iter()
            .zip(b.data())
            .any(|(x, y)| x.to_bits() != y.to_bits())
        {
            report.interleave_mismatches += 1;
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub pairs: usize,
    pub pixels: usize,
    pub mse: f64,
    pub rel: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

pub const EVAL_SCHEMA: &str = "fcdepth.eval/1";

fn raster_names(dir: &Path) -> Result<BTreeSet<String>> {
    let mut names = BTreeSet::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "dpth") {
            names.insert(path.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    Ok(names)
}

/// Pools metrics over every `.dpth` file present in both directories; the
/// two directories must hold the same file names.
pub fn eval(pred_dir: &Path, gt_dir: &Path) -> Result<EvalReport> {
    let pred = raster_names(pred_dir)?;
    let gt = raster_names(gt_dir)?;
    if pred != gt {
        let only: Vec<_> = pred.symmetric_difference(&gt).take(5).cloned().collect();
        bail!(
            "prediction and ground-truth file sets differ (e.g. {})",
            only.join(", ")
        );
    }
    ensure!(!pred.is_empty(), "no .dpth files in {}", pred_dir.display());
    let mut acc = MetricsAccumulator::new();
    for name in &pred {
        let p = DepthRaster::load(&pred_dir.join(name))?;
        let g = DepthRaster::load(&gt_dir.join(name))?;
        ensure!(
            (p.width(), p.height()) == (g.width(), g.height()),
            "{name}: prediction is {}x{}, ground truth {}x{}",
            p.width(),
            p.height(),
            g.width(),
            g.height()
        );
        let (pt, gt) = (p.to_tensor(), g.to_tensor());
        acc.add(&DepthPair::new(&pt, &gt)?);
    }
    let m = acc.finish()?;
    Ok(EvalReport {
        schema: EVAL_SCHEMA.to_string(),
        pairs: pred.len(),
        pixels: m.pixels,
        mse: m.mse,
        rel: m.rel,
        delta1: m.delta1,
        delta2: m.delta2,
        delta3: m.delta3,
    })
}

/// Writes `scene_NNNN.ppm` and `scene_NNNN.dpth` for each scene.
pub fn gen_synthetic(
    count: usize,
    resolution: (usize, usize),
    out: &Path,
    seed: u64,
) -> Result<Vec<PathBuf>> {
    let (w, h) = resolution;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut written = Vec::with_capacity(2 * count);
    for (i, (_, img, depth)) in synth::generate(count, w, h, &mut rng).enumerate() {
        let base = out.join(format!("scene_{i:04}"));
        let (ppm, dpth) = (base.with_extension("ppm"), base.with_extension("dpth"));
        img.save(&ppm)?;
        depth.save(&dpth)?;
        written.extend([ppm, dpth]);
    }
    Ok(written)
}
