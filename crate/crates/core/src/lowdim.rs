//! Pipeline for `p` well below `n`: least squares on the first half, the
//! generic quadratic estimators on the second half.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{is_sparse_zone, split_sample, RegressionSample};
use crate::pipeline::{detection_threshold, Detection};
use crate::quadratic::{
    component_estimates, masked_sum, selection_allowing_exact_fit, Branch, FunctionalEstimate, Regime, SplitRoles,
    ThresholdMatrix,
};

/// Smallest accepted ratio of extreme singular values of the design.
pub const SINGULAR_TOLERANCE: f64 = 1e-10;

/// Default threshold constant: the sparse threshold sits near
/// `sqrt(2·log(1 + p/s²))` standard deviations of each OLS coordinate.
pub const DEFAULT_ALPHA: f64 = core::f64::consts::SQRT_2;

/// Least-squares fit with its noise estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub theta_hat: DVector<f64>,
    /// `(X₁ᵀX₁)⁻¹`.
    pub gram_inverse: DMatrix<f64>,
    /// `‖Y₁ − X₁θ̂‖₂ / sqrt(n − p)`.
    pub sigma_hat: f64,
    pub n: usize,
    pub p: usize,
}

/// Threshold constant `α` of the sparse estimator and test constant `β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningParams {
    pub alpha: f64,
    pub beta: f64,
}

impl TuningParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: "must be positive and finite",
            });
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: "must be positive and finite",
            });
        }
        Ok(Self { alpha, beta })
    }
}

impl Default for TuningParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            beta: 1.0,
        }
    }
}

/// Least squares through a thin QR factorization; the rank check uses the
/// singular values of the triangular factor, which equal those of `X₁`.
pub fn ols_fit(x1: &DMatrix<f64>, y1: &DVector<f64>) -> Result<OlsFit> {
    let (n, p) = x1.shape();
    if y1.len() != n {
        return Err(Error::DimensionMismatch {
            what: "response length vs design rows",
            expected: n,
            got: y1.len(),
        });
    }
    if n <= p || p == 0 {
        return Err(Error::NotOverdetermined { n, p });
    }
    let qr = x1.clone().qr();
    let r = qr.r();
    let singular = r.singular_values();
    let largest = singular.max();
    let smallest = singular.min();
    if !(smallest >= SINGULAR_TOLERANCE * largest) || largest == 0.0 {
        return Err(Error::SingularDesign {
            condition: largest / smallest,
        });
    }
    let qty = qr.q().tr_mul(y1);
    let theta_hat = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::SingularDesign { condition: f64::INFINITY })?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or(Error::SingularDesign { condition: f64::INFINITY })?;
    let gram_inverse = &r_inv * r_inv.transpose();
    let sigma_hat = (y1 - x1 * &theta_hat).norm() / libm::sqrt((n - p) as f64);
    Ok(OlsFit {
        theta_hat,
        gram_inverse,
        sigma_hat,
        n,
        p,
    })
}

fn check_sparsity(s: usize, p: usize) -> Result<()> {
    if s == 0 {
        return Err(Error::InvalidParameter {
            name: "s",
            reason: "must be at least 1",
        });
    }
    if s > p {
        return Err(Error::SparsityTooLarge { s, p });
    }
    Ok(())
}

/// Estimates `‖θ‖₂²` and `‖θ‖₂` from a two-way split: OLS on the first
/// block, then the dense estimator (`s > sqrt(p)`) or the thresholded one
/// with `θ̄ = θ̂_OLS`, `σ̂ = σ̂_OLS` and `M = (X₁ᵀX₁)⁻¹` on the second block.
pub fn estimate_lowdim(sample: &RegressionSample, s: usize, params: &TuningParams) -> Result<FunctionalEstimate> {
    let p = sample.dim();
    check_sparsity(s, p)?;
    let split = split_sample(sample, 2)?;
    let (first, second) = (&split.subsamples[0], &split.subsamples[1]);
    let fit = ols_fit(&first.x, &first.y)?;
    let mut comp = component_estimates(&fit.theta_hat, &second.x, &second.y)?;
    comp.split_tag = Some(1);

    let (q_hat, branch, selected) = if is_sparse_zone(p, s) {
        let keep = selection_allowing_exact_fit(
            &fit.theta_hat,
            fit.sigma_hat,
            &ThresholdMatrix::Full(fit.gram_inverse.clone()),
            params.alpha,
            s,
        )?;
        let kept = keep.iter().filter(|&&k| k).count();
        (masked_sum(&comp.a, &keep), Branch::Sparse, Some(kept))
    } else {
        (comp.total(), Branch::Dense, None)
    };

    let mut estimate = FunctionalEstimate::new(
        q_hat,
        branch,
        Regime::Low,
        SplitRoles {
            prelim: 0,
            quadratic: 1,
            debias: None,
        },
    );
    estimate.sigma_hat = Some(fit.sigma_hat);
    estimate.parts = split.parts;
    estimate.n_per_split = split.n;
    estimate.dropped_rows = split.dropped_rows;
    estimate.selected = selected;
    Ok(estimate)
}

/// Rejects `θ = 0` when `Λ̂ ≥ β·σ̂_OLS·sqrt(s·log(1 + sqrt(p)/s)/N)`.
pub fn detect_lowdim(sample: &RegressionSample, s: usize, params: &TuningParams) -> Result<Detection> {
    let estimate = estimate_lowdim(sample, s, params)?;
    let sigma = estimate.sigma_hat.unwrap_or(0.0);
    let threshold = detection_threshold(params.beta, sigma, sample.dim(), sample.rows(), s);
    Ok(Detection::new(estimate, params.beta, threshold))
}
