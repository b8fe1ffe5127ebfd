use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fcdepth_cli::bench::BenchReport;
use fcdepth_cli::commands::EvalReport;
use fcdepth_cli::raster::DepthRaster;
use fcdepth_core::arch::{Param, WeightContainer};
use fcdepth_core::loss::DepthPair;
use fcdepth_core::metrics::compute_metrics;

fn fcdepth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fcdepth"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Synthetic corpus of `count` 64x48 scenes in `dir/data`.
fn corpus(dir: &Path, count: usize, seed: u64) -> PathBuf {
    let data = dir.join("data");
    let out = fcdepth(&[
        "gen-synthetic",
        "--count",
        &count.to_string(),
        "--resolution",
        "64x48",
        "--out",
        p(&data),
        "--seed",
        &seed.to_string(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    data
}

fn init_weights(model: &str, path: &Path, seed: u64) {
    let out = fcdepth(&[
        "init-weights",
        "--model",
        model,
        "--out",
        p(path),
        "--seed",
        &seed.to_string(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn infer_writes_raster_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path(), 1, 3);
    let w = dir.path().join("w.fcnw");
    init_weights("basic_sc_nonbt", &w, 1);
    let image = data.join("scene_0000.ppm");
    let (a, b) = (dir.path().join("a.dpth"), dir.path().join("b.dpth"));
    for out in [&a, &b] {
        let r = fcdepth(&[
            "infer",
            "--model",
            "basic_sc_nonbt",
            "--weights",
            p(&w),
            "--input",
            p(&image),
            "--output",
            p(out),
        ]);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
    }
    let raster = DepthRaster::load(&a).unwrap();
    assert_eq!((raster.width(), raster.height()), (64, 48));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn infer_with_missing_weight_names_the_layer() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path(), 1, 3);
    let w = dir.path().join("w.fcnw");
    init_weights("lite_sc_nonbt", &w, 1);
    let mut c = WeightContainer::load(&w).unwrap();
    c.remove("enc.s2.b0.conv2").unwrap();
    c.save(&w).unwrap();
    let r = fcdepth(&[
        "infer",
        "--model",
        "lite_sc_nonbt",
        "--weights",
        p(&w),
        "--input",
        p(&data.join("scene_0000.ppm")),
        "--output",
        p(&dir.path().join("o.dpth")),
    ]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("enc.s2.b0.conv2"), "{}", stderr(&r));
}

#[test]
fn infer_rejects_resolution_mismatch_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path(), 1, 3);
    let w = dir.path().join("w.fcnw");
    init_weights("lite_interl", &w, 1);
    let image = data.join("scene_0000.ppm");
    let out = dir.path().join("o.dpth");
    let r = fcdepth(&[
        "infer",
        "--model",
        "lite_interl:320x240",
        "--weights",
        p(&w),
        "--input",
        p(&image),
        "--output",
        p(&out),
    ]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("64x48"));
    let r = fcdepth(&[
        "infer",
        "--model",
        "lite_interl",
        "--weights",
        "/nonexistent.fcnw",
        "--input",
        p(&image),
        "--output",
        p(&out),
    ]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("/nonexistent.fcnw"));
}

#[test]
fn bench_emits_parseable_reports() {
    let r = fcdepth(&[
        "bench",
        "--block",
        "upconv_fast",
        "--resolution",
        "8x6",
        "--channels",
        "4:2",
        "--iters",
        "10",
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let report: BenchReport = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(report.schema, "fcdepth.bench/1");
    assert_eq!(report.kind, "block");
    assert_eq!(report.iterations, 10);
    assert_eq!(report.macs, 48 * 25 * 4 * 2);
    assert!(report.min_s <= report.p50_s && report.p50_s <= report.p95_s);

    let r = fcdepth(&[
        "bench",
        "--model",
        "lite_sc_nonbt",
        "--resolution",
        "64x48",
        "--iters",
        "10",
        "--warmup",
        "0",
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let report: BenchReport = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(
        (report.kind.as_str(), report.width, report.height),
        ("model", 64, 48)
    );
}

#[test]
fn bench_rejects_bad_arguments() {
    for args in [
        &[
            "bench",
            "--model",
            "basic_deconv",
            "--resolution",
            "300x240",
        ][..],
        &["bench", "--model", "basic_deconv", "--resolution", "wide"],
        &["bench", "--block", "upconv_fast", "--iters", "5"],
        &["bench", "--block", "upconv_other"],
        &["bench"],
    ] {
        assert_eq!(code(&fcdepth(args)), 2, "{args:?}");
    }
}

#[test]
fn verify_gate() {
    let r = fcdepth(&["verify"]);
    assert_eq!(code(&r), 0);
    let text = String::from_utf8(r.stdout).unwrap();
    let worst: f64 = text
        .lines()
        .find(|l| l.starts_with("upconv f32"))
        .and_then(|l| l.split(": ").nth(1)?.split_whitespace().next())
        .and_then(|v| v.parse().ok())
        .unwrap();
    assert!(worst <= 1e-5);

    assert_eq!(
        code(&fcdepth(&["verify", "--seeds", "2", "--inject-fault"])),
        1
    );
    assert_eq!(code(&fcdepth(&["verify", "--seeds", "0"])), 2);

    let (a, b) = (
        fcdepth(&["verify", "--seeds", "1"]),
        fcdepth(&["verify", "--seeds", "1"]),
    );
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn gen_synthetic_is_deterministic_and_analytic() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let a = corpus(d1.path(), 4, 9);
    let b = corpus(d2.path(), 4, 9);
    let mut names: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 8);
    for n in &names {
        assert_eq!(
            fs::read(a.join(n)).unwrap(),
            fs::read(b.join(n)).unwrap(),
            "{n:?}"
        );
    }
    // Scene 0 is a fronto-parallel plane.
    let d = DepthRaster::load(&a.join("scene_0000.dpth")).unwrap();
    assert!(d.values().iter().all(|&z| z == d.values()[0] && z > 0.0));

    let d3 = tempfile::tempdir().unwrap();
    let c = corpus(d3.path(), 4, 10);
    assert_ne!(
        fs::read(a.join("scene_0001.dpth")).unwrap(),
        fs::read(c.join("scene_0001.dpth")).unwrap()
    );
}

#[test]
fn eval_reports_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let gt = corpus(dir.path(), 3, 2);
    let r = fcdepth(&["eval", "--pred", p(&gt), "--gt", p(&gt)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let report: EvalReport = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(report.schema, "fcdepth.eval/1");
    assert_eq!((report.pairs, report.mse, report.delta1), (3, 0.0, 1.0));

    let (pd, gd) = (dir.path().join("p"), dir.path().join("g"));
    fs::create_dir_all(&pd).unwrap();
    fs::create_dir_all(&gd).unwrap();
    let g = DepthRaster::new(3, 1, vec![1.0, 2.0, 4.0]).unwrap();
    let d = DepthRaster::new(3, 1, vec![1.0, 2.4, 8.0]).unwrap();
    g.save(&gd.join("x.dpth")).unwrap();
    d.save(&pd.join("x.dpth")).unwrap();
    let r = fcdepth(&["eval", "--pred", p(&pd), "--gt", p(&gd)]);
    let report: EvalReport = serde_json::from_slice(&r.stdout).unwrap();
    let (dt, gt_t) = (d.to_tensor(), g.to_tensor());
    let want = compute_metrics(&DepthPair::new(&dt, &gt_t).unwrap()).unwrap();
    assert_eq!(
        (
            report.pixels,
            report.mse,
            report.rel,
            report.delta1,
            report.delta2,
            report.delta3
        ),
        (
            want.pixels,
            want.mse,
            want.rel,
            want.delta1,
            want.delta2,
            want.delta3
        )
    );

    d.save(&pd.join("y.dpth")).unwrap();
    let r = fcdepth(&["eval", "--pred", p(&pd), "--gt", p(&gd)]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("y.dpth"));
}

#[test]
fn convert_then_infer_matches() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path(), 1, 5);
    let image = data.join("scene_0000.ppm");
    let naive_model = "basic/upconv_naive/outer_middle";
    let (wn, wf) = (dir.path().join("naive.fcnw"), dir.path().join("fast.fcnw"));
    init_weights(naive_model, &wn, 4);
    let r = fcdepth(&["convert", "--weights", p(&wn), "--out", p(&wf)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));

    let (on, of) = (dir.path().join("n.dpth"), dir.path().join("f.dpth"));
    for (model, w, o) in [(naive_model, &wn, &on), ("basic_sc_interl", &wf, &of)] {
        let r = fcdepth(&[
            "infer",
            "--model",
            model,
            "--weights",
            p(w),
            "--input",
            p(&image),
            "--output",
            p(o),
        ]);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
    }
    let (a, b) = (
        DepthRaster::load(&on).unwrap(),
        DepthRaster::load(&of).unwrap(),
    );
    let diff = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f32::max);
    assert!(diff <= 1e-4, "{diff}");

    let bits = |c: &WeightContainer| {
        let mut v: Vec<u32> = c
            .iter()
            .flat_map(|(_, p)| p.values())
            .map(f32::to_bits)
            .collect();
        v.sort_unstable();
        v
    };
    let (cn, cf) = (
        WeightContainer::load(&wn).unwrap(),
        WeightContainer::load(&wf).unwrap(),
    );
    assert_eq!(bits(&cn), bits(&cf));
    assert!(cf.iter().all(|(name, _)| !name.ends_with(".conv5x5")));

    // Converting again, or converting a non-upconv container, is refused.
    assert_eq!(
        code(&fcdepth(&[
            "convert",
            "--weights",
            p(&wf),
            "--out",
            p(&dir.path().join("x"))
        ])),
        2
    );
    let nonbt = dir.path().join("nonbt.fcnw");
    init_weights("lite_sc_nonbt", &nonbt, 1);
    assert_eq!(
        code(&fcdepth(&[
            "convert",
            "--weights",
            p(&nonbt),
            "--out",
            p(&dir.path().join("x"))
        ])),
        2
    );
}

#[test]
fn weight_files_round_trip_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.fcnw"), dir.path().join("b.fcnw"));
    init_weights("basic_sc_deconv", &a, 7);
    init_weights("basic_sc_deconv", &b, 7);
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    let loaded = WeightContainer::load(&a).unwrap();
    let c = dir.path().join("c.fcnw");
    loaded.save(&c).unwrap();
    assert_eq!(fs::read(&c).unwrap(), bytes);
    assert!(matches!(loaded.get("head.conv"), Some(Param::Conv(k)) if k.bias().is_some()));

    let mut corrupt = bytes;
    corrupt[1] = b'?';
    fs::write(&c, corrupt).unwrap();
    let r = fcdepth(&[
        "infer",
        "--model",
        "basic_sc_deconv",
        "--weights",
        p(&c),
        "--input",
        "/nonexistent.ppm",
        "--output",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(code(&r), 2);
}
