//! Minimax rate formulas (constants set to 1) and log-log rate fitting.

use alloc::vec::Vec;
use core::str::FromStr;

use crate::error::{Error, Result};

/// `sqrt(s·log(1 + sqrt(p)/s)/N)`.
pub fn separation_rate(p: usize, total: usize, s: usize) -> f64 {
    libm::sqrt(rate_core(p, total, s))
}

fn rate_core(p: usize, total: usize, s: usize) -> f64 {
    let s = s as f64;
    s * libm::log(1.0 + libm::sqrt(p as f64) / s) / total as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum RateKind {
    /// Estimation of `‖θ‖₂`: `σ·sqrt(s·log(1 + sqrt(p)/s)/N)`.
    Phi,
    /// Estimation of `‖θ‖₂²` over `‖θ‖₂ ≤ κ`.
    Q,
    /// Separation radius in units of `σ`.
    Rho,
}

impl FromStr for RateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phi" => Ok(RateKind::Phi),
            "q" => Ok(RateKind::Q),
            "rho" => Ok(RateKind::Rho),
            other => Err(Error::UnknownTag(other.into())),
        }
    }
}

pub fn theoretical_rate(p: usize, total: usize, s: usize, sigma: f64, kappa: f64, which: RateKind) -> Result<f64> {
    if total == 0 || s == 0 || p == 0 {
        return Err(Error::InvalidParameter {
            name: "dimensions",
            reason: "p, s and N must be positive",
        });
    }
    if s > p {
        return Err(Error::SparsityTooLarge { s, p });
    }
    Ok(match which {
        RateKind::Phi => sigma * separation_rate(p, total, s),
        RateKind::Rho => separation_rate(p, total, s),
        RateKind::Q => {
            let first = sigma * sigma * rate_core(p, total, s) + sigma * kappa / libm::sqrt(total as f64);
            first.min(kappa * kappa)
        }
    })
}

/// Least-squares line through `(log x, log y)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: Vec<(f64, f64)>,
}

pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "points",
            reason: "need at least two points",
        });
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::InvalidParameter {
            name: "points",
            reason: "coordinates must be positive and finite",
        });
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (libm::log(x), libm::log(y))).collect();
    let m = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / m;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter {
            name: "points",
            reason: "x values must not all coincide",
        });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = logs
        .iter()
        .map(|p| {
            let e = p.1 - intercept - slope * p.0;
            e * e
        })
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        points: logs,
    })
}
