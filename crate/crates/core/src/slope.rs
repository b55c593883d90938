//! Square-Root SLOPE: sorted-ℓ₁ penalty, its proximal operator and a
//! proximal-gradient solver for
//!
//! ```text
//! θ̂ ∈ argmin_t  ‖Y − X t‖₂ / sqrt(n) + Σ_i λ_i |t|_(i)
//! ```
//!
//! where `|t|_(1) ≥ |t|_(2) ≥ …` are the sorted magnitudes and
//! `λ_j = c₁·sqrt(log(2p/j)/n)`. The loss is normalized by `sqrt(n)` so that
//! weights of order `1/sqrt(n)` balance a residual norm of order `sqrt(n)`;
//! with `n = 1` this is the plain `‖Y − Xt‖₂ + ‖t‖_*`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Residuals below this fraction of `‖Y‖₂` count as exact interpolation.
const INTERPOLATION_GUARD: f64 = 1e-10;
const MIN_STEP: f64 = 1e-30;

/// Nonincreasing SLOPE weights `λ_j = c₁·sqrt(log(2p/j)/n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeWeights {
    pub lambda: Vec<f64>,
    pub c1: f64,
    pub n: usize,
}

impl SlopeWeights {
    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }
}

pub fn slope_weights(p: usize, n: usize, c1: f64) -> Result<SlopeWeights> {
    if p == 0 || n == 0 {
        return Err(Error::InvalidParameter {
            name: "p/n",
            reason: "must be at least 1",
        });
    }
    if !(c1 > 0.0 && c1.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "c1",
            reason: "must be positive and finite",
        });
    }
    let lambda = (1..=p)
        .map(|j| c1 * libm::sqrt(libm::log(2.0 * p as f64 / j as f64) / n as f64))
        .collect();
    Ok(SlopeWeights { lambda, c1, n })
}

/// Indices sorted by decreasing magnitude; ties keep index order.
fn magnitude_order(t: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..t.len()).collect();
    order.sort_by(|&a, &b| libm::fabs(t[b]).total_cmp(&libm::fabs(t[a])));
    order
}

fn weighted_sorted_sum(t: &[f64], lambda: &[f64]) -> f64 {
    magnitude_order(t)
        .into_iter()
        .zip(lambda)
        .map(|(j, w)| w * libm::fabs(t[j]))
        .sum()
}

/// `‖t‖_* = Σ_i λ_i |t|_(i)`, largest weight on the largest magnitude.
pub fn sorted_l1_norm(t: &DVector<f64>, w: &SlopeWeights) -> Result<f64> {
    if t.len() != w.len() {
        return Err(Error::DimensionMismatch {
            what: "vector length vs number of weights",
            expected: w.len(),
            got: t.len(),
        });
    }
    Ok(weighted_sorted_sum(t.as_slice(), &w.lambda))
}

fn check_weights(w: &[f64]) -> Result<()> {
    for (i, &wi) in w.iter().enumerate() {
        if !(wi >= 0.0) || (i > 0 && wi > w[i - 1]) {
            return Err(Error::WeightOrder { index: i });
        }
    }
    Ok(())
}

/// Proximal operator of the sorted-ℓ₁ norm with weights `w`:
/// `argmin_x ½‖x − v‖₂² + Σ_i w_i |x|_(i)`.
///
/// Magnitudes are sorted, shifted by the weights, projected on the
/// nonincreasing nonnegative cone by pooling adjacent violators, and then
/// put back with their signs.
pub fn prox_sorted_l1(v: &DVector<f64>, w: &[f64]) -> Result<DVector<f64>> {
    if v.len() != w.len() {
        return Err(Error::DimensionMismatch {
            what: "vector length vs number of weights",
            expected: w.len(),
            got: v.len(),
        });
    }
    check_weights(w)?;
    Ok(prox_unchecked(v, w))
}

fn prox_unchecked(v: &DVector<f64>, w: &[f64]) -> DVector<f64> {
    let order = magnitude_order(v.as_slice());
    // (first index, length, sum) of each pooled block
    let mut blocks: Vec<(usize, usize, f64)> = Vec::with_capacity(v.len());
    for (i, &j) in order.iter().enumerate() {
        blocks.push((i, 1, libm::fabs(v[j]) - w[i]));
        while blocks.len() >= 2 {
            let (_, len_last, sum_last) = blocks[blocks.len() - 1];
            let (_, len_prev, sum_prev) = blocks[blocks.len() - 2];
            if sum_last * len_prev as f64 >= sum_prev * len_last as f64 {
                blocks.pop();
                let prev = blocks.last_mut().expect("at least one block");
                prev.1 += len_last;
                prev.2 += sum_last;
            } else {
                break;
            }
        }
    }
    let mut out = DVector::zeros(v.len());
    for (start, len, sum) in blocks {
        let value = (sum / len as f64).max(0.0);
        for &j in &order[start..start + len] {
            out[j] = if v[j] < 0.0 { -value } else { value };
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Relative objective decrease below which the solver stops.
    pub tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol: 1e-8,
        }
    }
}

/// Result of [`sqrt_slope_fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub theta_hat: DVector<f64>,
    /// `‖Y − Xθ̂‖₂/sqrt(n) + ‖θ̂‖_*` at the returned point.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `‖Y − Xθ̂‖₂ / sqrt(n)`.
    pub sigma_hat: f64,
}

/// Square-Root SLOPE on `(x1, y1)` with weights `slope_weights(p, n, c1)`.
///
/// Proximal gradient on the smooth part `t ↦ ‖Y − Xt‖₂/sqrt(n)` with
/// backtracking. The step starts at `n / ‖X‖_F²`, is doubled before each
/// iteration and halved until the quadratic upper bound holds, so accepted
/// iterations never increase the objective.
pub fn sqrt_slope_fit(x1: &DMatrix<f64>, y1: &DVector<f64>, c1: f64, opts: SolverOptions) -> Result<SlopeFit> {
    let (n, p) = x1.shape();
    if y1.len() != n {
        return Err(Error::DimensionMismatch {
            what: "response length vs design rows",
            expected: n,
            got: y1.len(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "must be at least 1",
        });
    }
    let weights = slope_weights(p, n, c1)?;
    let lambda = &weights.lambda;
    let root_n = libm::sqrt(n as f64);

    let y_norm = y1.norm();
    let mut theta = DVector::zeros(p);
    let mut resid = y1.clone();
    let mut resid_norm = y_norm;
    let mut objective = resid_norm / root_n;
    let guard = INTERPOLATION_GUARD * y_norm;

    let frob = x1.norm_squared();
    let mut step = if frob > 0.0 { n as f64 / frob } else { 1.0 };
    let mut iterations = 0;
    let mut converged = false;
    let mut scaled = vec![0.0; p];

    while iterations < opts.max_iter {
        if resid_norm <= guard {
            converged = true;
            break;
        }
        iterations += 1;
        if iterations > 1 {
            step *= 2.0;
        }
        let grad = x1.tr_mul(&resid) * (-1.0 / (root_n * resid_norm));
        let smooth = resid_norm / root_n;

        let accepted = loop {
            for (dst, &l) in scaled.iter_mut().zip(lambda) {
                *dst = step * l;
            }
            let cand = prox_unchecked(&(&theta - &grad * step), &scaled);
            let cand_resid = y1 - x1 * &cand;
            let cand_norm = cand_resid.norm();
            let diff = &cand - &theta;
            let bound = smooth + grad.dot(&diff) + diff.norm_squared() / (2.0 * step);
            if cand_norm / root_n <= bound + 1e-15 * smooth {
                break Some((cand, cand_resid, cand_norm));
            }
            step *= 0.5;
            if step < MIN_STEP {
                break None;
            }
        };
        let Some((cand, cand_resid, cand_norm)) = accepted else {
            break;
        };
        let cand_objective = cand_norm / root_n + weighted_sorted_sum(cand.as_slice(), lambda);
        let decrease = objective - cand_objective;
        let stalled = decrease <= opts.tol * objective.max(f64::MIN_POSITIVE);
        if cand_objective <= objective {
            theta = cand;
            resid = cand_resid;
            resid_norm = cand_norm;
            objective = cand_objective;
        }
        if stalled {
            converged = true;
            break;
        }
    }
    if !converged && resid_norm <= guard {
        converged = true;
    }

    Ok(SlopeFit {
        sigma_hat: resid_norm / root_n,
        objective,
        iterations,
        converged,
        theta_hat: theta,
    })
}

/// Objective of [`sqrt_slope_fit`] at an arbitrary point.
pub fn sqrt_slope_objective(x1: &DMatrix<f64>, y1: &DVector<f64>, t: &DVector<f64>, w: &SlopeWeights) -> Result<f64> {
    let n = x1.nrows();
    Ok((y1 - x1 * t).norm() / libm::sqrt(n as f64) + sorted_l1_norm(t, w)?)
}

/// `σ̂ = ‖Y₁ − X₁θ̂‖₂ / sqrt(n)`.
pub fn sigma_srs(x1: &DMatrix<f64>, y1: &DVector<f64>, theta_hat: &DVector<f64>) -> Result<f64> {
    let n = x1.nrows();
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "must be at least 1",
        });
    }
    if theta_hat.len() != x1.ncols() || y1.len() != n {
        return Err(Error::DimensionMismatch {
            what: "sigma estimate inputs",
            expected: x1.ncols(),
            got: theta_hat.len(),
        });
    }
    Ok((y1 - x1 * theta_hat).norm() / libm::sqrt(n as f64))
}
