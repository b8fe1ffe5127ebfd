use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use fcdepth_cli::bench::{self, BenchTarget, BlockKind};
use fcdepth_cli::commands::{self, DEFAULT_RESOLUTION};
use fcdepth_core::arch::{parse_resolution, ModelSpec};
use fcdepth_core::Shape4;

/// Depth-estimation network inference, benchmarks and checks.
#[derive(Parser)]
#[command(name = "fcdepth", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Predict a depth map for one P6 image.
    Infer {
        /// Preset or encoder/decoder/skips, optionally `:WxH` and `:full`.
        #[arg(long)]
        model: String,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Time a model or a single up-convolution block.
    Bench {
        #[arg(long, conflicts_with = "block", required_unless_present = "block")]
        model: Option<String>,
        /// upconv_naive or upconv_fast.
        #[arg(long)]
        block: Option<BlockKind>,
        /// Model input size, or block input feature-map size, as WxH.
        #[arg(long)]
        resolution: Option<String>,
        #[arg(long, default_value_t = 10)]
        iters: usize,
        #[arg(long, default_value_t = 2)]
        warmup: usize,
        /// Block channels as CIN:COUT.
        #[arg(long, default_value = "128:64")]
        channels: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check the interleaved up-convolution and interleave kernels against
    /// their references.
    Verify {
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Depth metrics over matching `.dpth` files of two directories.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Write synthetic image/depth pairs with analytic depth.
    GenSynthetic {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value = "320x240")]
        resolution: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Turn naive up-convolution weights into interleaved-block weights.
    Convert {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write seeded random weights for a model.
    InitWeights {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_channels(s: &str) -> Result<(usize, usize)> {
    let parsed = s
        .split_once(':')
        .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)));
    match parsed {
        Some((a, b)) if a > 0 && b > 0 => Ok((a, b)),
        _ => bail!("channels `{s}` are not CIN:COUT"),
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Infer {
            model,
            weights,
            input,
            output,
        } => {
            commands::infer_file(&model, &weights, &input, &output)?;
            eprintln!("wrote {}", output.display());
        }
        Command::Bench {
            model,
            block,
            resolution,
            iters,
            warmup,
            channels,
            seed,
        } => {
            let resolution = resolution.as_deref().map(parse_resolution).transpose()?;
            let target = match (model, block) {
                (Some(model), _) => {
                    let mut spec = ModelSpec::parse(&model, Some(DEFAULT_RESOLUTION))?;
                    if let Some((w, h)) = resolution {
                        spec = spec.with_resolution(w, h)?;
                    }
                    BenchTarget::Model(spec)
                }
                (None, Some(kind)) => {
                    let (w, h) = resolution.unwrap_or((40, 30));
                    let (cin, cout) = parse_channels(&channels)?;
                    BenchTarget::Block {
                        kind,
                        input: Shape4::new(1, h, w, cin),
                        cout,
                    }
                }
                (None, None) => bail!("one of --model or --block is required"),
            };
            let report = bench::run(&target, warmup, iters, seed)?;
            eprintln!("{report}");
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Verify {
            seeds,
            inject_fault,
        } => {
            let r = commands::verify(seeds, inject_fault)?;
            println!("seeds: {}", r.seeds);
            println!(
                "upconv f32 worst |naive - fast|: {:.3e} (tolerance {:.0e})",
                r.worst_f32,
                commands::F32_TOLERANCE
            );
            println!(
                "upconv f64 worst |naive - fast|: {:.3e} (tolerance {:.0e})",
                r.worst_f64,
                commands::F64_TOLERANCE
            );
            println!("interleave mismatches: {}", r.interleave_mismatches);
            if !r.passed() {
                println!("FAIL");
                return Ok(ExitCode::from(1));
            }
            println!("PASS");
        }
        Command::Eval { pred, gt } => {
            let report = commands::eval(&pred, &gt)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::GenSynthetic {
            count,
            resolution,
            out,
            seed,
        } => {
            let files = commands::gen_synthetic(count, parse_resolution(&resolution)?, &out, seed)?;
            eprintln!("wrote {} files to {}", files.len(), out.display());
        }
        Command::Convert { weights, out } => {
            let n = commands::convert(&weights, &out)?;
            eprintln!("wrote {n} entries to {}", out.display());
        }
        Command::InitWeights { model, seed, out } => {
            let n = commands::init_weights(&model, seed, &out)?;
            eprintln!("wrote {n} entries to {}", out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            // Some errors already embed their source in their message.
            let mut msg = err.to_string();
            for cause in err.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
