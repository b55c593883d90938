//! Regime selection, the detection rule and null calibration of `β`.

use alloc::vec::Vec;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::highdim::{estimate_highdim, HighDimParams};
use crate::lowdim::{estimate_lowdim, TuningParams};
use crate::model::{derive_seed, seeded_rng, synthesize, Dimensions, ModelSpec};
use crate::quadratic::{FunctionalEstimate, Regime};
use crate::rates::separation_rate;

/// Default ratio `γ` below which `p/n` counts as low-dimensional.
pub const DEFAULT_GAMMA: f64 = 0.5;

/// Picks the regime for `N` rows: low when `p ≤ γ·⌊N/2⌋`, else high.
pub fn choose_regime(p: usize, total: usize, gamma: f64) -> Regime {
    let n = total / 2;
    if n > p && (p as f64) <= gamma * n as f64 {
        Regime::Low
    } else {
        Regime::High
    }
}

/// `β·σ̂·sqrt(s·log(1 + sqrt(p)/s)/N)`.
pub fn detection_threshold(beta: f64, sigma_hat: f64, p: usize, total: usize, s: usize) -> f64 {
    beta * sigma_hat * separation_rate(p, total, s)
}

/// Outcome of a test of `θ = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// 1 when the null is rejected.
    pub decision: u8,
    pub lambda_hat: f64,
    pub threshold: f64,
    pub beta: f64,
    pub estimate: FunctionalEstimate,
}

impl Detection {
    pub fn new(estimate: FunctionalEstimate, beta: f64, threshold: f64) -> Self {
        Self {
            decision: u8::from(estimate.lambda_hat >= threshold),
            lambda_hat: estimate.lambda_hat,
            threshold,
            beta,
            estimate,
        }
    }
}

/// Either pipeline with its tuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimator {
    Low(TuningParams),
    High(HighDimParams),
}

impl Estimator {
    pub fn regime(&self) -> Regime {
        match self {
            Estimator::Low(_) => Regime::Low,
            Estimator::High(_) => Regime::High,
        }
    }

    pub fn estimate(&self, sample: &crate::model::RegressionSample, s: usize) -> Result<FunctionalEstimate> {
        match self {
            Estimator::Low(t) => estimate_lowdim(sample, s, t),
            Estimator::High(h) => estimate_highdim(sample, s, h),
        }
    }

    pub fn detect(&self, sample: &crate::model::RegressionSample, s: usize, beta: f64) -> Result<Detection> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: "must be positive and finite",
            });
        }
        let estimate = self.estimate(sample, s)?;
        let threshold = detection_threshold(
            beta,
            estimate.sigma_hat.unwrap_or(0.0),
            sample.dim(),
            sample.rows(),
            s,
        );
        Ok(Detection::new(estimate, beta, threshold))
    }
}

/// Scale-free statistic `Λ̂ / (σ̂·sqrt(s·log(1 + sqrt(p)/s)/N))`; the test
/// rejects exactly when it is at least `β`.
pub fn test_statistic(estimate: &FunctionalEstimate, p: usize, total: usize, s: usize) -> f64 {
    let scale = estimate.sigma_hat.unwrap_or(0.0) * separation_rate(p, total, s);
    if scale > 0.0 {
        estimate.lambda_hat / scale
    } else if estimate.lambda_hat > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Statistic of one null trial (`θ = 0`, `σ = 1`, Gaussian design and noise).
pub fn null_statistic(estimator: &Estimator, p: usize, total: usize, s: usize, seed: u64) -> Result<f64> {
    let dims = Dimensions::new(total, p, s)?;
    let spec = ModelSpec::gaussian(DVector::zeros(p), 1.0)?;
    let mut rng = seeded_rng(seed);
    let sample = synthesize(&spec, &dims, &mut rng)?;
    let estimate = estimator.estimate(&sample, s)?;
    Ok(test_statistic(&estimate, p, total, s))
}

/// Empirical `(1 − δ)` quantile of null statistics (order statistic
/// `⌈(1 − δ)·B⌉`), kept strictly positive so the rule stays well defined.
pub fn beta_from_null(stats: &[f64], delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter {
            name: "delta",
            reason: "must lie in (0, 1)",
        });
    }
    if stats.is_empty() {
        return Err(Error::InvalidParameter {
            name: "replications",
            reason: "need at least one null statistic",
        });
    }
    let mut sorted: Vec<f64> = stats.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len();
    let rank = libm::ceil((1.0 - delta) * b as f64) as usize;
    let beta = sorted[rank.clamp(1, b) - 1];
    Ok(if beta > 0.0 { beta } else { f64::MIN_POSITIVE })
}

/// Calibrates `β` from `replications` null trials with seeds
/// `derive_seed(seed, i)`.
pub fn calibrate_beta(
    estimator: &Estimator,
    p: usize,
    total: usize,
    s: usize,
    delta: f64,
    replications: usize,
    seed: u64,
) -> Result<f64> {
    let stats = (0..replications as u64)
        .map(|i| null_statistic(estimator, p, total, s, derive_seed(seed, i)))
        .collect::<Result<Vec<_>>>()?;
    beta_from_null(&stats, delta)
}
