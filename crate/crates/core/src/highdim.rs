//! Pipeline for `p` comparable to or larger than `n`: Square-Root SLOPE as
//! the preliminary estimate, debiasing on a third block for the sparse case.

use core::str::FromStr;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{is_sparse_zone, split_sample, RegressionSample};
use crate::pipeline::{detection_threshold, Detection};
use crate::quadratic::{
    component_estimates, debias, masked_sum, selection_allowing_exact_fit, Branch, DebiasedVector,
    FunctionalEstimate, Regime, SplitRoles, ThresholdMatrix,
};
use crate::slope::{sigma_srs, sqrt_slope_fit, SlopeFit, SolverOptions};

/// Default threshold constant. With `M = (2/n)·I` the threshold is about
/// `sqrt(2·log(1 + p/s²))` standard deviations of a debiased coordinate.
pub const DEFAULT_ALPHA: f64 = 1.0;

/// Default SLOPE weight constant, a little above the `sqrt(2)` at which the
/// weights start to dominate the noise correlations of a Gaussian design.
pub const DEFAULT_C1: f64 = 1.5;

/// Preliminary estimate used by the dense branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Prelim {
    /// Square-Root SLOPE.
    #[default]
    Srs,
    /// `θ̂ = 0`, which makes the estimate a plain U-statistic.
    Zero,
}

impl FromStr for Prelim {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "srs" => Ok(Prelim::Srs),
            "zero" => Ok(Prelim::Zero),
            other => Err(Error::UnknownTag(other.into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighDimParams {
    pub alpha: f64,
    pub c1: f64,
    pub solver: SolverOptions,
    pub prelim: Prelim,
}

impl Default for HighDimParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            c1: DEFAULT_C1,
            solver: SolverOptions::default(),
            prelim: Prelim::Srs,
        }
    }
}

impl HighDimParams {
    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: "must be positive and finite",
            });
        }
        if !(self.c1 > 0.0 && self.c1.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "c1",
                reason: "must be positive and finite",
            });
        }
        Ok(())
    }
}

/// Intermediate pieces of a high-dimensional fit.
#[derive(Debug, Clone, PartialEq)]
pub struct HighDimFitBundle {
    /// `None` when the zero preliminary estimate is used.
    pub slope: Option<SlopeFit>,
    pub theta_tilde: Option<DebiasedVector>,
    pub sigma_srs: f64,
    /// `sqrt(2)·σ̂_SRS`, the noise level entering the sparse threshold.
    pub sigma_used: Option<f64>,
    pub estimate: FunctionalEstimate,
}

/// Common threshold `α·sqrt(2)·σ̂·sqrt(log(1 + p/s²)/n)` of the sparse branch.
pub fn highdim_threshold(alpha: f64, sigma_srs: f64, p: usize, s: usize, n: usize) -> f64 {
    let log_term = libm::log(1.0 + p as f64 / (s as f64 * s as f64));
    alpha * core::f64::consts::SQRT_2 * sigma_srs * libm::sqrt(log_term / n as f64)
}

/// Runs the pipeline and keeps the intermediate fits.
///
/// Dense branch (`s > sqrt(p)` or zero preliminary): two blocks, SLOPE on the
/// first, `Q̂_D` on the second. Sparse branch: three blocks; SLOPE on the
/// first, `Q̂_S` on the second with `θ̄` the debiased SLOPE fit on the third.
pub fn fit_highdim(sample: &RegressionSample, s: usize, params: &HighDimParams) -> Result<HighDimFitBundle> {
    params.validate()?;
    let p = sample.dim();
    if s == 0 {
        return Err(Error::InvalidParameter {
            name: "s",
            reason: "must be at least 1",
        });
    }
    if s > p {
        return Err(Error::SparsityTooLarge { s, p });
    }

    let sparse = params.prelim == Prelim::Srs && is_sparse_zone(p, s);
    let split = split_sample(sample, if sparse { 3 } else { 2 })?;
    let first = &split.subsamples[0];
    let second = &split.subsamples[1];

    let (slope, prelim, sigma) = match params.prelim {
        Prelim::Srs => {
            let fit = sqrt_slope_fit(&first.x, &first.y, params.c1, params.solver)?;
            let theta = fit.theta_hat.clone();
            let sigma = fit.sigma_hat;
            (Some(fit), theta, sigma)
        }
        Prelim::Zero => {
            let zero = DVector::zeros(p);
            let sigma = sigma_srs(&first.x, &first.y, &zero)?;
            (None, zero, sigma)
        }
    };

    let comp = component_estimates(&prelim, &second.x, &second.y)?;
    let mut theta_tilde = None;
    let mut threshold = None;
    let mut selected = None;
    let q_hat = if sparse {
        let third = &split.subsamples[2];
        let tilde = debias(&prelim, &third.x, &third.y)?;
        let n = split.n;
        let keep = selection_allowing_exact_fit(
            &tilde.theta_tilde,
            sigma,
            &ThresholdMatrix::ScaledIdentity(2.0 / n as f64),
            params.alpha,
            s,
        )?;
        threshold = Some(highdim_threshold(params.alpha, sigma, p, s, n));
        selected = Some(keep.iter().filter(|&&k| k).count());
        theta_tilde = Some(tilde);
        masked_sum(&comp.a, &keep)
    } else {
        comp.total()
    };

    let mut estimate = FunctionalEstimate::new(
        q_hat,
        if sparse { Branch::Sparse } else { Branch::Dense },
        Regime::High,
        SplitRoles {
            prelim: 0,
            quadratic: 1,
            debias: if sparse { Some(2) } else { None },
        },
    );
    estimate.sigma_hat = Some(sigma);
    estimate.parts = split.parts;
    estimate.n_per_split = split.n;
    estimate.dropped_rows = split.dropped_rows;
    estimate.threshold = threshold;
    estimate.selected = selected;

    Ok(HighDimFitBundle {
        slope,
        theta_tilde,
        sigma_srs: sigma,
        sigma_used: sparse.then_some(core::f64::consts::SQRT_2 * sigma),
        estimate,
    })
}

pub fn estimate_highdim(sample: &RegressionSample, s: usize, params: &HighDimParams) -> Result<FunctionalEstimate> {
    Ok(fit_highdim(sample, s, params)?.estimate)
}

/// Rejects `θ = 0` when `Λ̂ ≥ β·σ̂_SRS·sqrt(s·log(1 + sqrt(p)/s)/N)`.
pub fn detect_highdim(sample: &RegressionSample, s: usize, params: &HighDimParams, beta: f64) -> Result<Detection> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "beta",
            reason: "must be positive and finite",
        });
    }
    let estimate = estimate_highdim(sample, s, params)?;
    let sigma = estimate.sigma_hat.unwrap_or(0.0);
    let threshold = detection_threshold(beta, sigma, sample.dim(), sample.rows(), s);
    Ok(Detection::new(estimate, beta, threshold))
}
