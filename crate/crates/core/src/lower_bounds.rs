//! Closed-form quantities behind the minimax lower bounds: the sparse
//! two-point prior, the chi-square cross term and the overlap MGF.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};

/// Uniform prior over `s`-sparse vectors whose nonzero entries all equal
/// `τ/sqrt(s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PriorSpec {
    pub p: usize,
    pub s: usize,
    pub tau: f64,
}

impl PriorSpec {
    pub fn new(p: usize, s: usize, tau: f64) -> Result<Self> {
        if s == 0 {
            return Err(Error::InvalidParameter {
                name: "s",
                reason: "must be at least 1",
            });
        }
        if s > p {
            return Err(Error::SparsityTooLarge { s, p });
        }
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "tau",
                reason: "must be nonnegative and finite",
            });
        }
        Ok(Self { p, s, tau })
    }
}

/// `ρ/sqrt(1 + ρ²)`.
pub fn tau_from_rho(rho: f64) -> f64 {
    rho / libm::sqrt(1.0 + rho * rho)
}

/// Noise level `sqrt(1 − τ²)` that keeps `Var(Y) = 1` under the prior.
pub fn prior_sigma(tau: f64) -> f64 {
    libm::sqrt((1.0 - tau * tau).max(0.0))
}

pub fn sample_prior_theta<R: Rng + ?Sized>(spec: &PriorSpec, rng: &mut R) -> Result<DVector<f64>> {
    let spec = PriorSpec::new(spec.p, spec.s, spec.tau)?;
    let value = spec.tau / libm::sqrt(spec.s as f64);
    let mut theta = DVector::zeros(spec.p);
    for j in rand::seq::index::sample(rng, spec.p, spec.s) {
        theta[j] = value;
    }
    Ok(theta)
}

/// `E_0[L_θ·L_θ']` for a Gaussian design with `σ² = 1 − τ²` under the
/// alternative: `(1 − ⟨θ, θ'⟩)^{−N}`.
pub fn chi2_cross(theta: &DVector<f64>, theta_prime: &DVector<f64>, total: usize) -> Result<f64> {
    if theta.len() != theta_prime.len() {
        return Err(Error::DimensionMismatch {
            what: "second vector length",
            expected: theta.len(),
            got: theta_prime.len(),
        });
    }
    let (left, right) = (theta.norm(), theta_prime.norm());
    if libm::fabs(left - right) > 1e-8 {
        return Err(Error::UnequalNorms { left, right });
    }
    let inner = theta.dot(theta_prime);
    if inner >= 1.0 {
        return Err(Error::DivergentCrossTerm { inner });
    }
    Ok(libm::exp(-(total as f64) * libm::log1p(-inner)))
}

/// `log C(n, k)` through log-gamma.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

/// `E exp(2Nτ²·H/s)` for `H` the overlap of two independent uniform
/// `s`-subsets of `{1..p}`, summed exactly in log space.
pub fn hypergeometric_mgf_bound(p: usize, s: usize, total: usize, tau: f64) -> Result<f64> {
    PriorSpec::new(p, s, tau)?;
    let rate = 2.0 * total as f64 * tau * tau / s as f64;
    let log_norm = ln_binomial(p, s);
    let lo = (2 * s).saturating_sub(p);
    let terms: alloc::vec::Vec<f64> = (lo..=s)
        .map(|h| rate * h as f64 + ln_binomial(s, h) + ln_binomial(p - s, s - h) - log_norm)
        .collect();
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| libm::exp(t - top)).sum();
    Ok(libm::exp(top + libm::log(sum)))
}

/// `max(0, 1 − sqrt(mgf − 1))`, a lower bound on the sum of type-I and
/// type-II errors of any test against the sparse prior.
pub fn bayes_testing_risk_bound(p: usize, s: usize, total: usize, tau: f64) -> Result<f64> {
    let mgf = hypergeometric_mgf_bound(p, s, total, tau)?;
    Ok((1.0 - libm::sqrt((mgf - 1.0).max(0.0))).max(0.0))
}

/// `A = sqrt(log((1 − δ)² + 1)/2)`.
pub fn bound_constant(delta: f64) -> f64 {
    libm::sqrt(0.5 * libm::log((1.0 - delta) * (1.0 - delta) + 1.0))
}

/// Radii of the testing lower bound.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LowerRadius {
    #[cfg_attr(feature = "serde", serde(rename = "A"))]
    pub a: f64,
    /// `A·min(sqrt(s'·log(1 + p/s'²)/N), 1)` with `s' = min(s, ⌊sqrt(p)⌋)`.
    pub r: f64,
    /// `A·min(sqrt(s·log(1 + sqrt(p)/s)/N), 1)`.
    pub rho: f64,
    pub s_truncated: usize,
}

fn floor_sqrt(p: usize) -> usize {
    let mut r = libm::sqrt(p as f64) as usize;
    while r * r > p {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= p {
        r += 1;
    }
    r
}

fn check_query(p: usize, total: usize, s: usize) -> Result<()> {
    if total == 0 {
        return Err(Error::InvalidParameter {
            name: "N",
            reason: "must be at least 1",
        });
    }
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

pub fn minimax_testing_lower_radius(p: usize, total: usize, s: usize, delta: f64) -> Result<LowerRadius> {
    check_query(p, total, s)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter {
            name: "delta",
            reason: "must lie in (0, 1)",
        });
    }
    let a = bound_constant(delta);
    let st = s.min(floor_sqrt(p)).max(1);
    let stf = st as f64;
    let r = a * libm::sqrt(stf * libm::log(1.0 + p as f64 / (stf * stf)) / total as f64).min(1.0);
    let rho = a * crate::rates::separation_rate(p, total, s).min(1.0);
    Ok(LowerRadius {
        a,
        r,
        rho,
        s_truncated: st,
    })
}

/// `min(σ²·min(s·log(1 + sqrt(p)/s)/N, 1) + σκ/sqrt(N), κ²)`.
pub fn q_lower_bound(p: usize, total: usize, s: usize, sigma: f64, kappa: f64) -> Result<f64> {
    check_query(p, total, s)?;
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter {
            name: "sigma",
            reason: "must be positive",
        });
    }
    if !(kappa >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "kappa",
            reason: "must be nonnegative",
        });
    }
    let rate = crate::rates::separation_rate(p, total, s);
    let first = sigma * sigma * (rate * rate).min(1.0) + sigma * kappa / libm::sqrt(total as f64);
    Ok(first.min(kappa * kappa))
}
