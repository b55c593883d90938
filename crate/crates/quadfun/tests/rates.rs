use quadfun::calibrate::BetaCache;
use quadfun::harness::Plan;
use quadfun::{summarize, ExperimentConfig, Task};

fn slope_of(config: &str) -> f64 {
    let plan = Plan::new(ExperimentConfig::from_json(config).unwrap(), &BetaCache::in_memory()).unwrap();
    let records = plan.run();
    let summary = summarize(&records, Task::EstimateNorm, 0.1).unwrap();
    assert_eq!(summary.failed_trials, 0);
    summary
        .fits
        .iter()
        .find(|f| f.metric == "mean_lambda_sq")
        .expect("null series fitted")
        .fit
        .slope
}

// With p proportional to n the least-squares pilot error does not shrink, and
// E Λ̂² decays like sqrt(p)/n, i.e. like n^{-1/2}.
#[test]
fn proportional_lowdim_null_decays_at_half_power() {
    let slope = slope_of(
        r#"{"regime": "low", "task": "estimate-norm", "replications": 150, "seed": 15,
            "grid": {"n": [64, 128, 256, 512], "p": "n/2", "s": "n/2", "kappa": [0.0]}}"#,
    );
    assert!((slope + 0.5).abs() < 0.2, "slope {slope}");
}

#[test]
fn fixed_p_lowdim_null_decays_at_first_power() {
    let slope = slope_of(
        r#"{"regime": "low", "task": "estimate-norm", "replications": 150, "seed": 16,
            "grid": {"n": [100, 200, 400, 800], "p": 10, "s": 10, "kappa": [0.0]}}"#,
    );
    assert!((slope + 1.0).abs() < 0.25, "slope {slope}");
}
