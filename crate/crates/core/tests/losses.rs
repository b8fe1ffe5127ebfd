use fcdepth_core::loss::{
    aberhu_step, berhu_loss, berhu_pixel, mse_rel_loss, AdaptiveBerHuState, DepthPair, LossParams,
};
use fcdepth_core::{Shape4, Tensor4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-3;
const REL_TOL: f64 = 1e-4;

/// Ground truth with roughly one pixel in eight invalid, prediction positive.
fn random_pair(seed: u64) -> (Tensor4<f64>, Tensor4<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = Shape4::new(1, rng.gen_range(1..6), rng.gen_range(1..6), 1);
    let gt = Tensor4::from_fn(shape, |_, _, _, _| match rng.gen_range(0..16) {
        0 => 0.0,
        1 => f64::NAN,
        _ => rng.gen_range(0.5..10.0),
    });
    let mut gt = gt;
    gt.data_mut()[0] = rng.gen_range(0.5..10.0);
    let pred = Tensor4::from_fn(shape, |_, _, _, _| rng.gen_range(0.3..10.0));
    (pred, gt)
}

fn central_difference(pred: &Tensor4<f64>, i: usize, f: impl Fn(&Tensor4<f64>) -> f64) -> f64 {
    let mut p = pred.clone();
    p.data_mut()[i] = pred.data()[i] + H;
    let up = f(&p);
    p.data_mut()[i] = pred.data()[i] - H;
    let down = f(&p);
    (up - down) / (2.0 * H)
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

#[test]
fn mse_rel_gradient_matches_finite_differences() {
    let mut checked = 0;
    for seed in 0..100 {
        let (pred, gt) = random_pair(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let params = LossParams::new(rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0)).unwrap();
        let loss = |p: &Tensor4<f64>| {
            mse_rel_loss(&DepthPair::new(p, &gt).unwrap(), &params)
                .unwrap()
                .value
        };
        let out = mse_rel_loss(&DepthPair::new(&pred, &gt).unwrap(), &params).unwrap();
        for i in 0..pred.data().len() {
            let analytic = out.grad.data()[i];
            let g = gt.data()[i];
            if g.is_nan() || g <= 0.0 {
                assert_eq!(analytic, 0.0);
                continue;
            }
            let fd = central_difference(&pred, i, loss);
            let err = relative_error(analytic, fd);
            assert!(
                err <= REL_TOL,
                "seed {seed} pixel {i}: analytic {analytic} fd {fd} rel {err}"
            );
            checked += 1;
        }
    }
    assert!(checked > 500, "only {checked} pixels checked");
}

#[test]
fn berhu_gradient_matches_finite_differences() {
    let mut checked = 0;
    let mut straddling = 0;
    for seed in 0..100 {
        let (pred, gt) = random_pair(seed);
        let k = ChaCha8Rng::seed_from_u64(2000 + seed).gen_range(0.2..4.0);
        let loss = |p: &Tensor4<f64>| {
            berhu_loss(&DepthPair::new(p, &gt).unwrap(), k)
                .unwrap()
                .value
        };
        let out = berhu_loss(&DepthPair::new(&pred, &gt).unwrap(), k).unwrap();
        let n = DepthPair::new(&pred, &gt).unwrap().valid_count() as f64;
        for i in 0..pred.data().len() {
            let analytic = out.grad.data()[i];
            let g = gt.data()[i];
            if g.is_nan() || g <= 0.0 {
                assert_eq!(analytic, 0.0);
                continue;
            }
            let e = g - pred.data()[i];
            let fd = central_difference(&pred, i, loss);
            // The stencil covers [e - h, e + h]; if that interval holds a
            // nonsmooth point (|e| = k, or e = 0) the difference quotient is
            // not a derivative estimate at the tolerance. There the error is
            // bounded by the jump in curvature instead: h / k at |e| = k, and
            // the full slope change 2 at e = 0.
            if (e.abs() - k).abs() < H || e.abs() < H {
                let bound = if e.abs() < H { 2.0 } else { H / k } / n;
                assert!(
                    (analytic - fd).abs() <= bound * (1.0 + 1e-6),
                    "seed {seed} pixel {i}"
                );
                straddling += 1;
                continue;
            }
            let err = relative_error(analytic, fd);
            assert!(
                err <= REL_TOL,
                "seed {seed} pixel {i}: e {e} k {k} analytic {analytic} fd {fd}"
            );
            checked += 1;
        }
    }
    assert!(checked > 500, "only {checked} pixels checked");
    assert!(straddling < checked / 100);
}

#[test]
fn loss_spot_values() {
    let one = |v: f64| Tensor4::from_vec(Shape4::new(1, 1, 1, 1), vec![v]).unwrap();
    let (d, g) = (one(1.0), one(2.0));
    let out = mse_rel_loss(&DepthPair::new(&d, &g).unwrap(), &LossParams::default()).unwrap();
    assert!((out.value - 1.5).abs() <= 1e-9);
    assert!((berhu_pixel(0.5, 1.0) - 0.5).abs() <= 1e-9);
    assert!((berhu_pixel(-0.5, 1.0) - 0.5).abs() <= 1e-9);
    assert!((berhu_pixel(2.0, 1.0) - 2.5).abs() <= 1e-9);
    assert!((berhu_pixel(-2.0, 1.0) - 2.5).abs() <= 1e-9);
}

/// Runs 10^4 steps on random batches with depths in `[0, d_max]`, checking
/// `0 < k <= d_max + delta` throughout. Returns (up moves, down moves, final k).
fn run_controller(seed: u64, predict: impl Fn(f64, f64) -> f64) -> (usize, usize, f64) {
    let d_max = 10.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = AdaptiveBerHuState::default();
    let (mut up, mut down) = (0, 0);
    for _ in 0..10_000 {
        let shape = Shape4::new(1, 2, 4, 1);
        let gt = Tensor4::<f64>::from_fn(shape, |_, _, _, _| rng.gen_range(0.0..=d_max));
        let pred = Tensor4::<f64>::from_fn(shape, |n, h, w, _| {
            predict(gt.get(n, h, w, 0), rng.gen_range(-1.0..1.0))
        });
        let Ok(step) = aberhu_step(&DepthPair::new(&pred, &gt).unwrap(), &state) else {
            continue;
        };
        if step.state.k > state.k {
            up += 1;
        } else if step.state.k < state.k {
            down += 1;
        }
        state = step.state;
        assert!(
            state.k > 0.0 && state.k <= d_max + state.delta,
            "k = {}",
            state.k
        );
    }
    (up, down, state.k)
}

#[test]
fn aberhu_threshold_stays_bounded() {
    let (up, down, _) = run_controller(77, |g, u| (g + 10.0 * u).clamp(0.0, 10.0));
    assert!(up > 0 && down > 0, "up {up} down {down}");

    // Error equal to depth: the upper band always loses, pushing k to the ceiling.
    let (up, _, k) = run_controller(78, |_, _| 0.0);
    assert!(up > 500 && k > 8.0, "up {up} k {k}");
}

#[test]
fn aberhu_moves_by_exactly_lr_delta() {
    let row = |v: &[f64]| Tensor4::from_vec(Shape4::new(1, 1, v.len(), 1), v.to_vec()).unwrap();
    let state = AdaptiveBerHuState::default();
    // Large errors above k, small below.
    let gt = row(&[0.5, 0.8, 1.5, 1.9]);
    let pred = row(&[0.5, 0.8, 3.5, 0.2]);
    let step = aberhu_step(&DepthPair::new(&pred, &gt).unwrap(), &state).unwrap();
    assert_eq!(step.state.k, state.k + state.lr * state.delta);
    assert!((step.state.k - 1.01).abs() <= 1e-12);

    let tie = row(&[0.5, 1.5]);
    let step = aberhu_step(&DepthPair::new(&tie, &tie).unwrap(), &state).unwrap();
    assert_eq!(step.state.k, state.k);

    let far = row(&[5.0, 6.0]);
    let step = aberhu_step(&DepthPair::new(&row(&[1.0, 1.0]), &far).unwrap(), &state).unwrap();
    assert_eq!(step.high_band, None);
    assert_eq!(step.state.k, state.k);
}

proptest! {
    #[test]
    fn losses_are_nonnegative_and_vanish_only_at_truth(
        gt in proptest::collection::vec(0.1f64..20.0, 1..32),
        noise in proptest::collection::vec(-5.0f64..5.0, 32),
        k in 0.05f64..5.0,
    ) {
        let shape = Shape4::new(1, 1, gt.len(), 1);
        let g = Tensor4::from_vec(shape, gt.clone()).unwrap();
        let d = Tensor4::from_vec(shape, gt.iter().zip(&noise).map(|(g, e)| (g + e).max(0.01)).collect()).unwrap();
        let pair = DepthPair::new(&d, &g).unwrap();
        let m = mse_rel_loss(&pair, &LossParams::default()).unwrap().value;
        let b = berhu_loss(&pair, k).unwrap().value;
        prop_assert!(m >= 0.0 && b >= 0.0);
        let equal = d.data() == g.data();
        prop_assert_eq!(m == 0.0, equal);
        prop_assert_eq!(b == 0.0, equal);

        let same = DepthPair::new(&g, &g).unwrap();
        prop_assert_eq!(mse_rel_loss(&same, &LossParams::default()).unwrap().value, 0.0);
        prop_assert_eq!(berhu_loss(&same, k).unwrap().value, 0.0);
    }

    #[test]
    fn berhu_is_continuous_at_the_kink(k in 0.01f64..10.0) {
        let below = berhu_pixel(k * (1.0 - 1e-12), k);
        let at = berhu_pixel(k, k);
        prop_assert!((below - at).abs() <= 1e-9 * k.max(1.0));
        prop_assert!((at - k).abs() <= 1e-12 * k);
    }
}
