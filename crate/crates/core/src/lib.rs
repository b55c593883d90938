//! Estimation and testing of the signal energy `‖θ‖₂²` in the linear model
//! `Y = Xθ + σξ` with unknown noise level, for low- and high-dimensional
//! designs with known sparsity.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod highdim;
pub mod lowdim;
pub mod lower_bounds;
pub mod model;
pub mod pipeline;
pub mod quadratic;
pub mod rates;
pub mod slope;

pub use error::{Error, Result};
pub use highdim::{detect_highdim, estimate_highdim, fit_highdim, HighDimFitBundle, HighDimParams, Prelim};
pub use lowdim::{detect_lowdim, estimate_lowdim, ols_fit, OlsFit, TuningParams};
pub use model::{
    derive_seed, seeded_rng, split_sample, synthesize, DesignLaw, Dimensions, ModelSpec, NoiseLaw, RegressionSample,
    SampleSplit,
};
pub use pipeline::{calibrate_beta, choose_regime, Detection, Estimator};
pub use quadratic::{Branch, FunctionalEstimate, Regime};
pub use slope::{sqrt_slope_fit, SlopeFit, SolverOptions};
