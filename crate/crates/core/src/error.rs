use thiserror::Error;

/// Errors raised by the estimators, the solver and the lower-bound formulas.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },
    #[error("sparsity s = {s} exceeds dimension p = {p}")]
    SparsityTooLarge { s: usize, p: usize },
    #[error("sample of {rows} rows cannot be split into {parts} parts")]
    TooFewRows { rows: usize, parts: usize },
    #[error("need more rows than columns (n = {n}, p = {p})")]
    NotOverdetermined { n: usize, p: usize },
    #[error("design is numerically singular (condition number {condition:e})")]
    SingularDesign { condition: f64 },
    #[error("negative threshold weight M[{index}][{index}] = {value}")]
    NegativeThresholdWeight { index: usize, value: f64 },
    #[error("sorted-l1 weights must be nonnegative and nonincreasing (violated at index {index})")]
    WeightOrder { index: usize },
    #[error("inner product {inner} >= 1: chi-square cross term diverges")]
    DivergentCrossTerm { inner: f64 },
    #[error("vectors must have equal norms for the cross term ({left} vs {right})")]
    UnequalNorms { left: f64, right: f64 },
    #[error("unrecognized tag `{0}`")]
    UnknownTag(alloc::string::String),
}

impl Error {
    /// True for failures caused by the data or the numerics, as opposed to
    /// bad arguments.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::SingularDesign { .. } | Error::DivergentCrossTerm { .. }
        )
    }
}

pub type Result<T> = core::result::Result<T, Error>;
