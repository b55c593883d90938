use quadfun_core::model::{sample_sparse_theta, SignPattern};
use quadfun_core::{
    calibrate_beta, choose_regime, derive_seed, seeded_rng, synthesize, Branch, Dimensions, Estimator,
    HighDimParams, ModelSpec, Regime, TuningParams,
};

fn draw(p: usize, total: usize, s: usize, norm: f64, sigma: f64, seed: u64) -> quadfun_core::RegressionSample {
    let mut rng = seeded_rng(seed);
    let theta = sample_sparse_theta(p, s, norm, SignPattern::RandomSigns, &mut rng).unwrap();
    let spec = ModelSpec::gaussian(theta, sigma).unwrap();
    synthesize(&spec, &Dimensions::new(total, p, s).unwrap(), &mut rng).unwrap()
}

#[test]
fn lowdim_recovers_norm() {
    let est = Estimator::Low(TuningParams::default());
    let mean: f64 = (0..20)
        .map(|t| est.estimate(&draw(20, 2000, 20, 1.0, 1.0, t), 20).unwrap().lambda_hat)
        .sum::<f64>()
        / 20.0;
    assert!((mean - 1.0).abs() < 0.1, "{mean}");
}

#[test]
fn highdim_recovers_norm_in_both_branches() {
    let est = Estimator::High(HighDimParams::default());
    for (s, branch) in [(3, Branch::Sparse), (40, Branch::Dense)] {
        let mean: f64 = (0..10)
            .map(|t| {
                let e = est.estimate(&draw(200, 600, s, 2.0, 1.0, 100 + t), s).unwrap();
                assert_eq!(e.branch, branch);
                assert_eq!(e.regime, Regime::High);
                e.lambda_hat
            })
            .sum::<f64>()
            / 10.0;
        assert!((mean - 2.0).abs() < 0.4, "s={s}: {mean}");
    }
}

#[test]
fn auto_regime_switches_on_aspect_ratio() {
    assert_eq!(choose_regime(50, 400, 0.5), Regime::Low);
    assert_eq!(choose_regime(100, 400, 0.5), Regime::Low);
    assert_eq!(choose_regime(101, 400, 0.5), Regime::High);
    assert_eq!(choose_regime(300, 400, 0.5), Regime::High);
}

#[test]
fn calibrated_highdim_test_holds_level() {
    let (p, total, s, delta) = (200, 300, 3, 0.1);
    let est = Estimator::High(HighDimParams::default());
    let beta = calibrate_beta(&est, p, total, s, delta, 2000, 5).unwrap();
    let trials = 1000;
    let rejections: u32 = (0..trials)
        .map(|t| {
            let sample = draw(p, total, s, 0.0, 1.0, derive_seed(77, t));
            u32::from(est.detect(&sample, s, beta).unwrap().decision)
        })
        .sum();
    let level = rejections as f64 / trials as f64;
    assert!(level <= delta + 0.03, "level {level}");

    let power: u32 = (0..200)
        .map(|t| {
            let sample = draw(p, total, s, 1.0, 1.0, derive_seed(78, t));
            u32::from(est.detect(&sample, s, beta).unwrap().decision)
        })
        .sum();
    assert!(power >= 190, "power {power}/200");
}

#[test]
fn detection_is_scale_invariant() {
    let sample = draw(30, 400, 5, 0.4, 1.0, 9);
    let mut scaled = sample.clone();
    scaled.y *= 3.0;
    let est = Estimator::Low(TuningParams::default());
    let a = est.detect(&sample, 5, 1.5).unwrap();
    let b = est.detect(&scaled, 5, 1.5).unwrap();
    assert_eq!(a.decision, b.decision);
    assert!((b.lambda_hat / a.lambda_hat - 3.0).abs() < 1e-9);
    assert!((b.threshold / a.threshold - 3.0).abs() < 1e-9);
}
