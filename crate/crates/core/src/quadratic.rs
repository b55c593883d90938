//! Generic estimators of `Q(θ) = ‖θ‖₂²` built on a preliminary estimate.
//!
//! A preliminary estimate `θ̂` comes from one block of the sample. Another,
//! independent block `(X₂, Y₂)` with `n` rows then gives, per coordinate,
//!
//! ```text
//! a_j = θ̂_j² + (2θ̂_j / n)·X₂ⱼᵀ r + (1 / (n(n−1)))·Σ_{k≠l} X₂ₖⱼ X₂ₗⱼ r_k r_l,   r = Y₂ − X₂θ̂,
//! ```
//!
//! which is conditionally unbiased for `θ_j²`. The off-diagonal sum is
//! evaluated as `(Σ_k X₂ₖⱼ r_k)² − Σ_k (X₂ₖⱼ r_k)²`, so the cost is `O(n·p)`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Per-coordinate estimates `a_j(θ̂)` of `θ_j²`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentEstimates {
    pub a: DVector<f64>,
    pub prelim: DVector<f64>,
    /// Index of the block that supplied `(X₂, Y₂)`, when known.
    pub split_tag: Option<usize>,
}

impl ComponentEstimates {
    pub fn total(&self) -> f64 {
        self.a.sum()
    }
}

/// One-step correction `θ̃ = θ̂ + Xᵀ(Y − Xθ̂)/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DebiasedVector {
    pub theta_tilde: DVector<f64>,
}

/// Matrix whose diagonal scales the per-coordinate thresholds of the sparse
/// estimator.
#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdMatrix {
    Full(DMatrix<f64>),
    /// `c·I`.
    ScaledIdentity(f64),
}

impl ThresholdMatrix {
    pub fn diag(&self, j: usize) -> f64 {
        match self {
            ThresholdMatrix::Full(m) => m[(j, j)],
            ThresholdMatrix::ScaledIdentity(c) => *c,
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        match self {
            ThresholdMatrix::Full(m) => {
                if m.nrows() != p || m.ncols() != p {
                    return Err(Error::DimensionMismatch {
                        what: "threshold matrix size vs p",
                        expected: p,
                        got: m.nrows(),
                    });
                }
                for j in 0..p {
                    if m[(j, j)] < 0.0 {
                        return Err(Error::NegativeThresholdWeight {
                            index: j,
                            value: m[(j, j)],
                        });
                    }
                }
            }
            ThresholdMatrix::ScaledIdentity(c) => {
                if *c < 0.0 {
                    return Err(Error::NegativeThresholdWeight { index: 0, value: *c });
                }
            }
        }
        Ok(())
    }
}

/// Which estimator produced a [`FunctionalEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Branch {
    /// All coordinates, used when `s > sqrt(p)`.
    Dense,
    /// Thresholded coordinates, used when `s ≤ sqrt(p)`.
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Regime {
    /// Least-squares preliminary estimate.
    Low,
    /// Square-Root SLOPE preliminary estimate.
    High,
}

/// Which block of the split played which role.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitRoles {
    pub prelim: usize,
    pub quadratic: usize,
    pub debias: Option<usize>,
}

/// Estimates of `‖θ‖₂²` and `‖θ‖₂` with the metadata of the pipeline that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FunctionalEstimate {
    pub q_hat: f64,
    pub lambda_hat: f64,
    pub sigma_hat: Option<f64>,
    pub branch: Branch,
    pub regime: Regime,
    pub parts: usize,
    pub n_per_split: usize,
    pub dropped_rows: usize,
    /// Common threshold on `|θ̄_j|` (high-dimensional sparse branch only).
    pub threshold: Option<f64>,
    /// Number of coordinates kept by the sparse branch.
    pub selected: Option<usize>,
    pub roles: SplitRoles,
}

impl FunctionalEstimate {
    pub fn new(q_hat: f64, branch: Branch, regime: Regime, roles: SplitRoles) -> Self {
        Self {
            q_hat,
            lambda_hat: norm_from_q(q_hat),
            sigma_hat: None,
            branch,
            regime,
            parts: 0,
            n_per_split: 0,
            dropped_rows: 0,
            threshold: None,
            selected: None,
            roles,
        }
    }
}

fn check_block(prelim: &DVector<f64>, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.ncols() != prelim.len() {
        return Err(Error::DimensionMismatch {
            what: "design columns vs preliminary estimate length",
            expected: prelim.len(),
            got: x.ncols(),
        });
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "response length vs design rows",
            expected: x.nrows(),
            got: y.len(),
        });
    }
    Ok(())
}

/// Computes `a_j(θ̂)` for every coordinate on the block `(x2, y2)`.
pub fn component_estimates(prelim: &DVector<f64>, x2: &DMatrix<f64>, y2: &DVector<f64>) -> Result<ComponentEstimates> {
    check_block(prelim, x2, y2)?;
    let n = x2.nrows();
    if n < 2 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "component estimates need at least 2 rows",
        });
    }
    let nf = n as f64;
    let pair_norm = 1.0 / (nf * (nf - 1.0));
    let resid = y2 - x2 * prelim;
    let a = DVector::from_iterator(
        prelim.len(),
        x2.column_iter().zip(prelim.iter()).map(|(col, &t)| {
            let (sum, sum_sq) = col
                .iter()
                .zip(resid.iter())
                .fold((0.0, 0.0), |(s, ss), (&xk, &rk)| {
                    let z = xk * rk;
                    (s + z, ss + z * z)
                });
            t * t + 2.0 * t * sum / nf + (sum * sum - sum_sq) * pair_norm
        }),
    );
    Ok(ComponentEstimates {
        a,
        prelim: prelim.clone(),
        split_tag: None,
    })
}

pub fn debias(prelim: &DVector<f64>, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DebiasedVector> {
    check_block(prelim, x, y)?;
    let n = x.nrows();
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "debiasing needs at least 1 row",
        });
    }
    let resid = y - x * prelim;
    let theta_tilde = prelim + x.tr_mul(&resid) / n as f64;
    Ok(DebiasedVector { theta_tilde })
}

/// `Q̂_D(θ̂) = Σ_j a_j(θ̂)`.
pub fn q_dense(prelim: &DVector<f64>, x2: &DMatrix<f64>, y2: &DVector<f64>) -> Result<f64> {
    Ok(component_estimates(prelim, x2, y2)?.total())
}

/// Coordinates kept by the sparse estimator:
/// `|θ̄_j| > α·σ̂·sqrt(M_jj·log(1 + p/s²))`.
pub fn sparse_selection(
    bar_theta: &DVector<f64>,
    sigma_hat: f64,
    m: &ThresholdMatrix,
    alpha: f64,
    s: usize,
) -> Result<Vec<bool>> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            reason: "must be nonnegative",
        });
    }
    if !(sigma_hat > 0.0 && sigma_hat.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "sigma_hat",
            reason: "must be positive and finite",
        });
    }
    if s == 0 {
        return Err(Error::InvalidParameter {
            name: "s",
            reason: "must be at least 1",
        });
    }
    let p = bar_theta.len();
    m.validate(p)?;
    let log_term = libm::log(1.0 + p as f64 / (s as f64 * s as f64));
    Ok(bar_theta
        .iter()
        .enumerate()
        .map(|(j, &b)| libm::fabs(b) > alpha * sigma_hat * libm::sqrt(m.diag(j) * log_term))
        .collect())
}

/// `Q̂_S = Σ_j a_j(θ̂)·1{|θ̄_j| > α·σ̂·sqrt(M_jj·log(1 + p/s²))}`.
#[allow(clippy::too_many_arguments)]
pub fn q_sparse(
    prelim: &DVector<f64>,
    bar_theta: &DVector<f64>,
    sigma_hat: f64,
    m: &ThresholdMatrix,
    alpha: f64,
    s: usize,
    x2: &DMatrix<f64>,
    y2: &DVector<f64>,
) -> Result<f64> {
    if bar_theta.len() != prelim.len() {
        return Err(Error::DimensionMismatch {
            what: "second preliminary estimate length",
            expected: prelim.len(),
            got: bar_theta.len(),
        });
    }
    let keep = sparse_selection(bar_theta, sigma_hat, m, alpha, s)?;
    let comp = component_estimates(prelim, x2, y2)?;
    Ok(masked_sum(&comp.a, &keep))
}

/// Like [`sparse_selection`], but a zero noise estimate keeps every nonzero
/// coordinate instead of failing.
pub(crate) fn selection_allowing_exact_fit(
    bar_theta: &DVector<f64>,
    sigma_hat: f64,
    m: &ThresholdMatrix,
    alpha: f64,
    s: usize,
) -> Result<Vec<bool>> {
    if sigma_hat == 0.0 {
        m.validate(bar_theta.len())?;
        return Ok(bar_theta.iter().map(|&b| b != 0.0).collect());
    }
    sparse_selection(bar_theta, sigma_hat, m, alpha, s)
}

pub(crate) fn masked_sum(a: &DVector<f64>, keep: &[bool]) -> f64 {
    a.iter().zip(keep).filter(|(_, &k)| k).map(|(v, _)| v).sum()
}

/// `|q|^{1/2}`.
pub fn norm_from_q(q_hat: f64) -> f64 {
    libm::sqrt(libm::fabs(q_hat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::seeded_rng;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};
    use std::vec;

    fn col(values: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(values)
    }

    /// Direct evaluation of the double sum over `k ≠ l`.
    fn naive_a(prelim: &DVector<f64>, x: &DMatrix<f64>, y: &DVector<f64>) -> Vec<f64> {
        let n = x.nrows();
        let r: Vec<f64> = (0..n).map(|k| y[k] - (x.row(k) * prelim)[0]).collect();
        (0..x.ncols())
            .map(|j| {
                let mut cross = 0.0;
                for k in 0..n {
                    for l in 0..n {
                        if k != l {
                            cross += x[(k, j)] * x[(l, j)] * r[k] * r[l];
                        }
                    }
                }
                let lin: f64 = (0..n).map(|k| x[(k, j)] * r[k]).sum();
                prelim[j] * prelim[j]
                    + 2.0 * prelim[j] * lin / n as f64
                    + cross / (n as f64 * (n as f64 - 1.0))
            })
            .collect()
    }

    fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = seeded_rng(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn hand_computed_single_coordinate() {
        let x = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let y = col(&[2.0, 3.0]);
        let a = component_estimates(&col(&[0.0]), &x, &y).unwrap();
        assert!((a.a[0] - 6.0).abs() < 1e-12);
        assert!((q_dense(&col(&[0.0]), &x, &y).unwrap() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn zero_residual_is_exact() {
        let theta = col(&[1.5, -2.0, 0.0, 0.25]);
        let x = gaussian_matrix(7, 4, 1);
        let y = &x * &theta;
        let a = component_estimates(&theta, &x, &y).unwrap();
        for j in 0..4 {
            assert!((a.a[j] - theta[j] * theta[j]).abs() < 1e-12);
        }
        let q = q_dense(&theta, &x, &y).unwrap();
        assert!((q - theta.norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn needs_two_rows() {
        let x = DMatrix::from_element(1, 1, 1.0);
        assert!(component_estimates(&col(&[0.0]), &x, &col(&[1.0])).is_err());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let x = gaussian_matrix(4, 3, 2);
        assert!(matches!(
            component_estimates(&col(&[0.0, 0.0]), &x, &col(&[0.0; 4])),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(debias(&col(&[0.0; 3]), &x, &col(&[0.0; 3])).is_err());
    }

    #[test]
    fn fast_matches_naive_double_sum() {
        for seed in 0..100 {
            let x = gaussian_matrix(5, 4, seed);
            let y = DVector::from_iterator(5, gaussian_matrix(5, 1, seed + 1000).iter().copied());
            let prelim = DVector::from_iterator(4, gaussian_matrix(4, 1, seed + 2000).iter().copied());
            let fast = component_estimates(&prelim, &x, &y).unwrap();
            for (j, slow) in naive_a(&prelim, &x, &y).into_iter().enumerate() {
                let rel = (fast.a[j] - slow).abs() / slow.abs().max(1e-300);
                assert!(rel <= 1e-10 || (fast.a[j] - slow).abs() < 1e-14, "seed {seed} j {j}");
            }
        }
    }

    #[test]
    fn debias_examples() {
        let x = DMatrix::from_element(1, 1, 2.0);
        let d = debias(&col(&[1.0]), &x, &col(&[4.0])).unwrap();
        assert!((d.theta_tilde[0] - 5.0).abs() < 1e-15);

        let x = gaussian_matrix(6, 3, 4);
        let prelim = col(&[0.3, -1.0, 2.0]);
        let y = &x * &prelim;
        let d = debias(&prelim, &x, &y).unwrap();
        assert!((d.theta_tilde - &prelim).amax() < 1e-14);

        let y = col(&[1.0, -2.0, 0.5, 0.0, 3.0, 1.0]);
        let d = debias(&DVector::zeros(3), &x, &y).unwrap();
        assert!((d.theta_tilde - x.tr_mul(&y) / 6.0).amax() < 1e-15);
    }

    #[test]
    fn joint_quadratic_scaling() {
        let x = gaussian_matrix(9, 4, 5);
        let y = DVector::from_iterator(9, gaussian_matrix(9, 1, 6).iter().copied());
        let prelim = col(&[0.5, -0.25, 1.0, 0.0]);
        let base = q_dense(&prelim, &x, &y).unwrap();
        for c in [-2.0, 0.5, 3.0] {
            let scaled = q_dense(&(&prelim * c), &x, &(&y * c)).unwrap();
            assert!((scaled - c * c * base).abs() <= 1e-12 * (1.0 + (c * c * base).abs()));
        }
    }

    #[test]
    fn sparse_extremes() {
        let x = gaussian_matrix(8, 3, 7);
        let y = DVector::from_iterator(8, gaussian_matrix(8, 1, 8).iter().copied());
        let prelim = col(&[0.1, 0.2, -0.3]);
        let bar = col(&[0.5, -0.7, 0.01]);
        let id = ThresholdMatrix::ScaledIdentity(1.0);
        let off = q_sparse(&prelim, &bar, 1.0, &id, 1e6, 1, &x, &y).unwrap();
        assert_eq!(off, 0.0);
        let on = q_sparse(&prelim, &bar, 1.0, &id, 0.0, 1, &x, &y).unwrap();
        assert!((on - q_dense(&prelim, &x, &y).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn sparse_two_coordinate_toy() {
        // threshold sqrt(log 3) ≈ 1.0481: only the first coordinate survives
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let y = col(&[1.0, 2.0]);
        let q = q_sparse(
            &DVector::zeros(2),
            &col(&[5.0, 0.001]),
            1.0,
            &ThresholdMatrix::ScaledIdentity(1.0),
            1.0,
            1,
            &x,
            &y,
        )
        .unwrap();
        // a₁ = (1/(2·1))·2·(1·3·1·2) = 6
        assert!((q - 6.0).abs() < 1e-12);
    }

    #[test]
    fn ties_are_excluded() {
        // threshold = 1·1·sqrt(1·log(1 + 1/1)) = sqrt(log 2)
        let t = libm::sqrt(libm::log(2.0));
        let keep = sparse_selection(&col(&[t]), 1.0, &ThresholdMatrix::ScaledIdentity(1.0), 1.0, 1).unwrap();
        assert_eq!(keep, vec![false]);
    }

    #[test]
    fn negative_threshold_weight_is_rejected() {
        let m = ThresholdMatrix::Full(DMatrix::from_diagonal(&col(&[1.0, -0.5])));
        assert!(matches!(
            sparse_selection(&col(&[1.0, 1.0]), 1.0, &m, 1.0, 1),
            Err(Error::NegativeThresholdWeight { index: 1, .. })
        ));
        assert!(sparse_selection(&col(&[1.0]), 0.0, &ThresholdMatrix::ScaledIdentity(1.0), 1.0, 1).is_err());
    }

    #[test]
    fn norm_examples() {
        assert_eq!(norm_from_q(4.0), 2.0);
        assert_eq!(norm_from_q(-9.0), 3.0);
        assert_eq!(norm_from_q(0.0), 0.0);
        let e = FunctionalEstimate::new(
            -0.25,
            Branch::Dense,
            Regime::Low,
            SplitRoles {
                prelim: 0,
                quadratic: 1,
                debias: None,
            },
        );
        assert_eq!(e.lambda_hat, 0.5);
    }

    #[test]
    fn conditional_unbiasedness_per_coordinate() {
        let theta = col(&[1.0, -0.5, 0.0]);
        let prelim = col(&[0.4, 0.1, -0.2]);
        let reps = 10_000;
        let mut rng = seeded_rng(77);
        let mut sums = [0.0f64; 3];
        let mut sq = [0.0f64; 3];
        for _ in 0..reps {
            let x = DMatrix::from_fn(20, 3, |_, _| StandardNormal.sample(&mut rng));
            let noise = DVector::from_fn(20, |_, _| StandardNormal.sample(&mut rng));
            let y = &x * &theta + noise;
            let a = component_estimates(&prelim, &x, &y).unwrap().a;
            for j in 0..3 {
                sums[j] += a[j];
                sq[j] += a[j] * a[j];
            }
        }
        for j in 0..3 {
            let mean = sums[j] / reps as f64;
            let var = sq[j] / reps as f64 - mean * mean;
            let se = (var / reps as f64).sqrt();
            assert!((mean - theta[j] * theta[j]).abs() <= 3.0 * se, "coordinate {j}: {mean} ± {se}");
        }
    }

    proptest! {
        #[test]
        fn sparse_with_zero_alpha_equals_dense(seed in 0u64..10_000) {
            let x = gaussian_matrix(6, 4, seed);
            let y = DVector::from_iterator(6, gaussian_matrix(6, 1, seed ^ 0xff).iter().copied());
            let prelim = DVector::from_iterator(4, gaussian_matrix(4, 1, seed ^ 0xf0f).iter().copied());
            let bar = DVector::from_iterator(4, gaussian_matrix(4, 1, seed ^ 0xabc).iter().copied());
            let dense = q_dense(&prelim, &x, &y).unwrap();
            let sparse = q_sparse(&prelim, &bar, 0.7, &ThresholdMatrix::ScaledIdentity(2.0), 0.0, 2, &x, &y).unwrap();
            prop_assert!((dense - sparse).abs() <= 1e-12 * (1.0 + dense.abs()));
        }
    }
}
