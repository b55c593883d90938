//! Data model `Y = X θ + σ ξ`: entry laws, synthetic samples and sample splitting.
//!
//! Every entry law used here is standardized (mean 0, variance 1). All
//! sampling is driven by an explicit generator so a sample is a pure function
//! of its parameters and seed.

use alloc::string::ToString;
use alloc::vec::Vec;
use core::ops::Range;
use core::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Weight of the Gaussian component in the smoothed Rademacher laws:
/// `ε·sqrt(1 − w²) + w·Z`.
const SMOOTHING: f64 = 0.5;

/// Sample sizes and sparsity of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dimensions {
    /// Total number of rows `N`.
    pub total: usize,
    /// Ambient dimension `p`.
    pub p: usize,
    /// Sparsity budget `s`.
    pub s: usize,
}

impl Dimensions {
    pub fn new(total: usize, p: usize, s: usize) -> Result<Self> {
        if total == 0 {
            return Err(Error::InvalidParameter {
                name: "N",
                reason: "must be at least 1",
            });
        }
        if p < 2 {
            return Err(Error::InvalidParameter {
                name: "p",
                reason: "must be at least 2",
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
        Ok(Self { total, p, s })
    }

    /// Per-split size `n = floor(N / parts)`.
    pub fn per_split(&self, parts: usize) -> usize {
        self.total / parts
    }

    /// Sparse zone `s ≤ sqrt(p)`, evaluated exactly on integers.
    pub fn is_sparse(&self) -> bool {
        is_sparse_zone(self.p, self.s)
    }
}

/// `s ≤ sqrt(p)` without floating point: `s² ≤ p`.
pub fn is_sparse_zone(p: usize, s: usize) -> bool {
    s.saturating_mul(s) <= p
}

/// Law of the design entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum DesignLaw {
    #[default]
    StandardNormal,
    /// Uniform on `[-sqrt 3, sqrt 3]`.
    UniformScaled,
    /// Rademacher sign convolved with a small Gaussian; bounded density.
    RademacherSmoothed,
}

/// Law of the noise entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum NoiseLaw {
    #[default]
    StandardNormal,
    /// Scaled Rademacher sign plus a Gaussian component; subGaussian.
    ScaledRademacherMixture,
}

fn smoothed_sign<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let z: f64 = StandardNormal.sample(rng);
    sign * libm::sqrt(1.0 - SMOOTHING * SMOOTHING) + SMOOTHING * z
}

impl DesignLaw {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DesignLaw::StandardNormal => StandardNormal.sample(rng),
            DesignLaw::UniformScaled => {
                let root3 = libm::sqrt(3.0);
                rng.random_range(-root3..root3)
            }
            DesignLaw::RademacherSmoothed => smoothed_sign(rng),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            DesignLaw::StandardNormal => "standard-normal",
            DesignLaw::UniformScaled => "uniform-scaled",
            DesignLaw::RademacherSmoothed => "rademacher-smoothed",
        }
    }
}

impl NoiseLaw {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            NoiseLaw::StandardNormal => StandardNormal.sample(rng),
            NoiseLaw::ScaledRademacherMixture => smoothed_sign(rng),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            NoiseLaw::StandardNormal => "standard-normal",
            NoiseLaw::ScaledRademacherMixture => "scaled-rademacher-mixture",
        }
    }
}

impl FromStr for DesignLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard-normal" => Ok(DesignLaw::StandardNormal),
            "uniform-scaled" => Ok(DesignLaw::UniformScaled),
            "rademacher-smoothed" => Ok(DesignLaw::RademacherSmoothed),
            other => Err(Error::UnknownTag(other.to_string())),
        }
    }
}

impl FromStr for NoiseLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard-normal" => Ok(NoiseLaw::StandardNormal),
            "scaled-rademacher-mixture" => Ok(NoiseLaw::ScaledRademacherMixture),
            other => Err(Error::UnknownTag(other.to_string())),
        }
    }
}

/// Parameter, noise level and entry laws of the regression model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub theta: DVector<f64>,
    pub sigma: f64,
    pub design: DesignLaw,
    pub noise: NoiseLaw,
}

impl ModelSpec {
    pub fn new(theta: DVector<f64>, sigma: f64, design: DesignLaw, noise: NoiseLaw) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                reason: "must be positive and finite",
            });
        }
        Ok(Self {
            theta,
            sigma,
            design,
            noise,
        })
    }

    /// Gaussian design and noise.
    pub fn gaussian(theta: DVector<f64>, sigma: f64) -> Result<Self> {
        Self::new(theta, sigma, DesignLaw::StandardNormal, NoiseLaw::StandardNormal)
    }
}

/// Ground truth attached to simulated samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub theta: DVector<f64>,
    pub sigma: f64,
}

/// A design matrix with its response.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSample {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub truth: Option<Truth>,
}

impl RegressionSample {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                what: "response length vs design rows",
                expected: x.nrows(),
                got: y.len(),
            });
        }
        Ok(Self { x, y, truth: None })
    }

    pub fn rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }
}

/// One block of a split sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Subsample {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Rows of the parent sample this block was cut from.
    pub rows: Range<usize>,
}

impl Subsample {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Disjoint contiguous blocks of equal size `n`; trailing rows are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSplit {
    pub parts: usize,
    pub n: usize,
    pub subsamples: Vec<Subsample>,
    pub dropped_rows: usize,
}

/// Draws an `N × p` design with i.i.d. entries, filled row by row.
pub fn sample_design<R: Rng + ?Sized>(dims: &Dimensions, design: DesignLaw, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_row_iterator(
        dims.total,
        dims.p,
        (0..dims.total * dims.p).map(|_| design.draw(rng)),
    )
}

pub fn sample_noise<R: Rng + ?Sized>(len: usize, law: NoiseLaw, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(len, (0..len).map(|_| law.draw(rng)))
}

/// Draws `X` then `ξ` from `rng` and returns `Y = Xθ + σξ` with the truth recorded.
pub fn synthesize<R: Rng + ?Sized>(spec: &ModelSpec, dims: &Dimensions, rng: &mut R) -> Result<RegressionSample> {
    if spec.theta.len() != dims.p {
        return Err(Error::DimensionMismatch {
            what: "theta length vs p",
            expected: dims.p,
            got: spec.theta.len(),
        });
    }
    let x = sample_design(dims, spec.design, rng);
    let xi = sample_noise(dims.total, spec.noise, rng);
    let y = &x * &spec.theta + xi * spec.sigma;
    Ok(RegressionSample {
        x,
        y,
        truth: Some(Truth {
            theta: spec.theta.clone(),
            sigma: spec.sigma,
        }),
    })
}

/// Sign pattern of the nonzero entries of a sparse test vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum SignPattern {
    #[default]
    Equal,
    RandomSigns,
}

impl FromStr for SignPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal" => Ok(SignPattern::Equal),
            "random-signs" => Ok(SignPattern::RandomSigns),
            _ => Err(Error::InvalidParameter {
                name: "pattern",
                reason: "expected `equal` or `random-signs`",
            }),
        }
    }
}

/// An `s`-sparse vector with uniformly random support and entries of
/// magnitude `magnitude / sqrt(s)`, so that `‖θ‖₂ = magnitude`.
pub fn sample_sparse_theta<R: Rng + ?Sized>(
    p: usize,
    s: usize,
    magnitude: f64,
    pattern: SignPattern,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if s > p {
        return Err(Error::SparsityTooLarge { s, p });
    }
    if s == 0 {
        return Err(Error::InvalidParameter {
            name: "s",
            reason: "must be at least 1",
        });
    }
    if !(magnitude >= 0.0 && magnitude.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "magnitude",
            reason: "must be nonnegative and finite",
        });
    }
    let value = magnitude / libm::sqrt(s as f64);
    let mut theta = DVector::zeros(p);
    for j in rand::seq::index::sample(rng, p, s).into_vec() {
        let sign = match pattern {
            SignPattern::Equal => 1.0,
            SignPattern::RandomSigns => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        theta[j] = sign * value;
    }
    Ok(theta)
}

/// Cuts the first `parts·n` rows into `parts` contiguous blocks of
/// `n = floor(N / parts)` rows each.
pub fn split_sample(sample: &RegressionSample, parts: usize) -> Result<SampleSplit> {
    if !(parts == 2 || parts == 3) {
        return Err(Error::InvalidParameter {
            name: "parts",
            reason: "must be 2 or 3",
        });
    }
    let rows = sample.rows();
    if rows < parts {
        return Err(Error::TooFewRows { rows, parts });
    }
    let n = rows / parts;
    let subsamples = (0..parts)
        .map(|k| {
            let start = k * n;
            Subsample {
                x: sample.x.rows(start, n).into_owned(),
                y: sample.y.rows(start, n).into_owned(),
                rows: start..start + n,
            }
        })
        .collect();
    Ok(SampleSplit {
        parts,
        n,
        subsamples,
        dropped_rows: rows - parts * n,
    })
}

/// Counter-based seed for trial `index` of a run seeded with `master`.
///
/// The ChaCha stream id carries the counter, so the derived seed does not
/// depend on the order in which trials are executed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

/// Generator for a (derived) trial seed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
