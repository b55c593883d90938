//! Monte Carlo experiments over a grid of sample sizes, dimensions, noise
//! levels and signal strengths.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use quadfun_core::highdim::{self, Prelim};
use quadfun_core::lowdim;
use quadfun_core::model::{is_sparse_zone, sample_sparse_theta, SignPattern};
use quadfun_core::pipeline::{choose_regime, DEFAULT_GAMMA};
use quadfun_core::rates::{fit_rate, theoretical_rate, RateFit, RateKind};
use quadfun_core::{
    derive_seed, seeded_rng, synthesize, DesignLaw, Dimensions, Estimator, HighDimParams, ModelSpec, NoiseLaw, Regime,
    SolverOptions, TuningParams,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibrate::{hex_prefix, BetaCache, CalibrationKey, DEFAULT_REPLICATIONS};
use crate::error::{HarnessError, Result};
use crate::rules::eval_rule;

/// Column order of `records.csv`.
pub const RECORD_COLUMNS: [&str; 15] = [
    "config_id",
    "seed",
    "n",
    "p",
    "s",
    "sigma",
    "true_q",
    "q_hat",
    "lambda_hat",
    "decision",
    "err_q",
    "err_lambda",
    "N",
    "grid_point",
    "status",
];

/// Stream index reserved for calibration trials, far from any trial index.
const CALIBRATION_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegimeChoice {
    Low,
    High,
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    #[default]
    EstimateNorm,
    EstimateQ,
    Detect,
}

/// A fixed integer or an expression in `n`, `N` (and `p` for the sparsity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Rule {
    Fixed(usize),
    Expr(String),
}

impl Rule {
    fn eval(&self, vars: &[(&str, usize)]) -> Result<usize> {
        match self {
            Rule::Fixed(v) => Ok(*v),
            Rule::Expr(e) => eval_rule(e, vars),
        }
    }
}

fn one() -> Vec<f64> {
    vec![1.0]
}

fn zero() -> Vec<f64> {
    vec![0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    /// Per-split sample sizes; the total is `parts·n`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n: Vec<usize>,
    /// Total sample sizes.
    #[serde(default, rename = "N", skip_serializing_if = "Vec::is_empty")]
    pub total: Vec<usize>,
    pub p: Rule,
    pub s: Rule,
    #[serde(default = "one")]
    pub sigma: Vec<f64>,
    /// Signal norms `‖θ‖₂`.
    #[serde(default = "zero")]
    pub kappa: Vec<f64>,
}

fn default_c1() -> f64 {
    highdim::DEFAULT_C1
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

fn default_calibration() -> usize {
    DEFAULT_REPLICATIONS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tuning {
    /// Threshold constant of the low-dimensional sparse estimator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_low: Option<f64>,
    /// Threshold constant of the high-dimensional sparse estimator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_high: Option<f64>,
    /// Test constant; calibrated under the null when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default = "default_c1")]
    pub c1: f64,
    #[serde(default)]
    pub prelim: Prelim,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_calibration")]
    pub calibration_replications: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

impl Default for Tuning {
    fn default() -> Self {
        Self {
            alpha_low: None,
            alpha_high: None,
            beta: None,
            c1: default_c1(),
            prelim: Prelim::Srs,
            gamma: default_gamma(),
            calibration_replications: default_calibration(),
            max_iter: None,
            tol: None,
        }
    }
}

fn default_delta() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub regime: RegimeChoice,
    #[serde(default)]
    pub task: Task,
    pub replications: usize,
    pub seed: u64,
    pub grid: Grid,
    #[serde(default)]
    pub tuning: Tuning,
    #[serde(default)]
    pub design: DesignLaw,
    #[serde(default)]
    pub noise: NoiseLaw,
    #[serde(default)]
    pub signs: SignPattern,
    /// Probability level: quantile `1 − δ` of absolute errors and test level.
    #[serde(default = "default_delta")]
    pub delta: f64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text)
    }

    /// Short hash of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex_prefix(&Sha256::digest(json.as_bytes()), 16)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.replications == 0 {
            return bad("replications must be at least 1");
        }
        if self.grid.n.is_empty() == self.grid.total.is_empty() {
            return bad("grid needs exactly one of `n` or `N`");
        }
        if self.grid.sigma.is_empty() || self.grid.sigma.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return bad("grid.sigma must be a nonempty list of nonnegative numbers");
        }
        if self.grid.kappa.is_empty() || self.grid.kappa.iter().any(|&k| !(k >= 0.0 && k.is_finite())) {
            return bad("grid.kappa must be a nonempty list of nonnegative numbers");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must lie in (0, 1)");
        }
        if self.task == Task::Detect && self.tuning.beta.is_none() && self.tuning.calibration_replications == 0 {
            return bad("detection needs `beta` or calibration_replications ≥ 1");
        }
        self.grid_points().map(|_| ())
    }

    fn estimator(&self, regime: Regime) -> Estimator {
        let t = &self.tuning;
        match regime {
            Regime::Low => Estimator::Low(TuningParams {
                alpha: t.alpha_low.unwrap_or(lowdim::DEFAULT_ALPHA),
                beta: t.beta.unwrap_or(1.0),
            }),
            Regime::High => {
                let defaults = SolverOptions::default();
                Estimator::High(HighDimParams {
                    alpha: t.alpha_high.unwrap_or(highdim::DEFAULT_ALPHA),
                    c1: t.c1,
                    solver: SolverOptions {
                        max_iter: t.max_iter.unwrap_or(defaults.max_iter),
                        tol: t.tol.unwrap_or(defaults.tol),
                    },
                    prelim: t.prelim,
                })
            }
        }
    }

    fn parts(&self, regime: Regime, p: usize, s: usize) -> usize {
        match regime {
            Regime::High if self.tuning.prelim == Prelim::Srs && is_sparse_zone(p, s) => 3,
            _ => 2,
        }
    }

    /// Expands the grid in the order sizes, then `sigma`, then `kappa`.
    pub fn grid_points(&self) -> Result<Vec<GridPoint>> {
        let mut points = Vec::new();
        let by_n = !self.grid.n.is_empty();
        let sizes = if by_n { &self.grid.n } else { &self.grid.total };
        for &size in sizes {
            let (n_guess, total_guess) = if by_n { (size, 2 * size) } else { (size / 2, size) };
            let p = self.grid.p.eval(&[("n", n_guess), ("N", total_guess)])?;
            let s = self.grid.s.eval(&[("n", n_guess), ("N", total_guess), ("p", p)])?;
            Dimensions::new(total_guess.max(1), p, s).map_err(|e| HarnessError::Config(format!("size {size}: {e}")))?;
            let regime = match self.regime {
                RegimeChoice::Low => Regime::Low,
                RegimeChoice::High => Regime::High,
                RegimeChoice::Auto if by_n => {
                    if size > p && p as f64 <= self.tuning.gamma * size as f64 {
                        Regime::Low
                    } else {
                        Regime::High
                    }
                }
                RegimeChoice::Auto => choose_regime(p, size, self.tuning.gamma),
            };
            let parts = self.parts(regime, p, s);
            let (n, total) = if by_n { (size, parts * size) } else { (size / parts, size) };
            if n < 2 {
                return Err(HarnessError::Config(format!("size {size} leaves fewer than 2 rows per split")));
            }
            for &sigma in &self.grid.sigma {
                for &kappa in &self.grid.kappa {
                    points.push(GridPoint {
                        index: points.len(),
                        n,
                        total,
                        p,
                        s,
                        sigma,
                        kappa,
                        regime,
                        estimator: self.estimator(regime),
                    });
                }
            }
        }
        Ok(points)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    /// Per-split size.
    pub n: usize,
    pub total: usize,
    pub p: usize,
    pub s: usize,
    pub sigma: f64,
    pub kappa: f64,
    pub regime: Regime,
    pub estimator: Estimator,
}

/// One row of `records.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub config_id: String,
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub sigma: f64,
    pub true_q: f64,
    pub q_hat: Option<f64>,
    pub lambda_hat: Option<f64>,
    pub decision: Option<u8>,
    pub err_q: Option<f64>,
    pub err_lambda: Option<f64>,
    #[serde(rename = "N")]
    pub total: usize,
    pub grid_point: usize,
    /// `ok`, or `error: <message>` for trials excluded from aggregates.
    pub status: String,
}

impl TrialRecord {
    pub fn true_lambda(&self) -> f64 {
        self.true_q.sqrt()
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Configuration plus the expanded grid and any calibrated test constants.
#[derive(Debug, Clone)]
pub struct Plan {
    pub config: ExperimentConfig,
    pub config_id: String,
    pub points: Vec<GridPoint>,
    pub betas: Vec<Option<f64>>,
}

impl Plan {
    pub fn new(config: ExperimentConfig, cache: &BetaCache) -> Result<Self> {
        config.validate()?;
        let points = config.grid_points()?;
        let betas = points
            .iter()
            .map(|pt| match (config.task, config.tuning.beta) {
                (Task::Detect, Some(b)) => Ok(Some(b)),
                (Task::Detect, None) => {
                    let key = CalibrationKey::new(
                        &pt.estimator,
                        pt.p,
                        pt.total,
                        pt.s,
                        config.delta,
                        config.tuning.calibration_replications,
                        derive_seed(config.seed, CALIBRATION_STREAM),
                    );
                    cache.get_or_calibrate(&pt.estimator, &key).map(Some)
                }
                _ => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config_id: config.fingerprint(),
            config,
            points,
            betas,
        })
    }

    pub fn trial_count(&self) -> usize {
        self.points.len() * self.config.replications
    }

    /// Runs trial `t`: grid point `t / replications`, seed `derive_seed(seed, t)`.
    pub fn run_trial(&self, t: usize) -> TrialRecord {
        let pt = &self.points[t / self.config.replications];
        let seed = derive_seed(self.config.seed, t as u64);
        let true_q = pt.kappa * pt.kappa;
        let mut record = TrialRecord {
            config_id: self.config_id.clone(),
            seed,
            n: pt.n,
            p: pt.p,
            s: pt.s,
            sigma: pt.sigma,
            true_q,
            q_hat: None,
            lambda_hat: None,
            decision: None,
            err_q: None,
            err_lambda: None,
            total: pt.total,
            grid_point: pt.index,
            status: "ok".into(),
        };
        match self.evaluate(pt, seed) {
            Ok((q_hat, lambda_hat, decision)) => {
                record.q_hat = Some(q_hat);
                record.lambda_hat = Some(lambda_hat);
                record.decision = decision;
                record.err_q = Some(q_hat - true_q);
                record.err_lambda = Some(lambda_hat - record.true_lambda());
            }
            Err(e) => record.status = format!("error: {e}"),
        }
        record
    }

    fn evaluate(&self, pt: &GridPoint, seed: u64) -> quadfun_core::Result<(f64, f64, Option<u8>)> {
        let mut rng = seeded_rng(seed);
        let dims = Dimensions::new(pt.total, pt.p, pt.s)?;
        let theta = sample_sparse_theta(pt.p, pt.s, pt.kappa, self.config.signs, &mut rng)?;
        let spec = ModelSpec::new(theta, pt.sigma, self.config.design, self.config.noise)?;
        let sample = synthesize(&spec, &dims, &mut rng)?;
        match self.betas[pt.index] {
            Some(beta) => {
                let d = pt.estimator.detect(&sample, pt.s, beta)?;
                Ok((d.estimate.q_hat, d.lambda_hat, Some(d.decision)))
            }
            None => {
                let e = pt.estimator.estimate(&sample, pt.s)?;
                Ok((e.q_hat, e.lambda_hat, None))
            }
        }
    }

    /// All trials, in trial-index order regardless of scheduling.
    pub fn run(&self) -> Vec<TrialRecord> {
        (0..self.trial_count()).into_par_iter().map(|t| self.run_trial(t)).collect()
    }
}

/// Expands the grid, calibrates if needed and runs every trial.
pub fn run_trials(config: &ExperimentConfig, cache: &BetaCache) -> Result<Vec<TrialRecord>> {
    Ok(Plan::new(config.clone(), cache)?.run())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub grid_point: usize,
    pub n: usize,
    #[serde(rename = "N")]
    pub total: usize,
    pub p: usize,
    pub s: usize,
    pub sigma: f64,
    pub kappa: f64,
    pub trials: usize,
    pub failed: usize,
    pub mean_q_hat: f64,
    pub mean_lambda_hat: f64,
    pub mean_lambda_sq: f64,
    pub mean_err_q: f64,
    pub median_err_q: f64,
    pub mean_err_lambda: f64,
    pub median_err_lambda: f64,
    pub mse_q: f64,
    pub mse_lambda: f64,
    /// `(1 − δ)` quantile of `|q̂ − q|`.
    pub quantile_abs_err_q: f64,
    pub quantile_abs_err_lambda: f64,
    pub rejection_rate: Option<f64>,
    pub theory_phi: f64,
    pub theory_q: f64,
    pub theory_rho: f64,
    /// Mean squared error over the squared theoretical rate of the task.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesFit {
    pub sigma: f64,
    pub kappa: f64,
    /// Aggregate regressed on `n` in log-log scale.
    pub metric: String,
    pub fit: RateFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_id: String,
    pub task: Task,
    pub delta: f64,
    pub total_trials: usize,
    pub failed_trials: usize,
    pub points: Vec<PointSummary>,
    pub fits: Vec<SeriesFit>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

fn median(v: &[f64]) -> f64 {
    let s = sorted(v);
    match s.len() {
        0 => f64::NAN,
        m if m % 2 == 1 => s[m / 2],
        m => 0.5 * (s[m / 2 - 1] + s[m / 2]),
    }
}

/// Order statistic `⌈level·m⌉` of the values.
pub fn upper_quantile(v: &[f64], level: f64) -> f64 {
    let s = sorted(v);
    if s.is_empty() {
        return f64::NAN;
    }
    let rank = (level * s.len() as f64).ceil() as usize;
    s[rank.clamp(1, s.len()) - 1]
}

fn summarize_point(records: &[&TrialRecord], task: Task, delta: f64) -> Result<PointSummary> {
    let first = records[0];
    let ok: Vec<&TrialRecord> = records.iter().copied().filter(|r| r.is_ok()).collect();
    let pick = |f: fn(&TrialRecord) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|r| f(r)).collect() };
    let q_hat = pick(|r| r.q_hat);
    let lambda_hat = pick(|r| r.lambda_hat);
    let err_q = pick(|r| r.err_q);
    let err_lambda = pick(|r| r.err_lambda);
    let sq = |v: &[f64]| v.iter().map(|x| x * x).collect::<Vec<_>>();
    let abs = |v: &[f64]| v.iter().map(|x| x.abs()).collect::<Vec<_>>();
    let decisions: Vec<f64> = ok.iter().filter_map(|r| r.decision.map(f64::from)).collect();
    let kappa = first.true_lambda();
    let theory = |k| theoretical_rate(first.p, first.total, first.s, first.sigma, kappa, k);
    let (phi, q_rate, rho) = (theory(RateKind::Phi)?, theory(RateKind::Q)?, theory(RateKind::Rho)?);
    let mse_q = mean(&sq(&err_q));
    let mse_lambda = mean(&sq(&err_lambda));
    let ratio = match task {
        Task::EstimateQ => (q_rate > 0.0).then(|| mse_q / (q_rate * q_rate)),
        _ => (phi > 0.0).then(|| mse_lambda / (phi * phi)),
    }
    .filter(|r| r.is_finite());
    Ok(PointSummary {
        grid_point: first.grid_point,
        n: first.n,
        total: first.total,
        p: first.p,
        s: first.s,
        sigma: first.sigma,
        kappa,
        trials: records.len(),
        failed: records.len() - ok.len(),
        mean_q_hat: mean(&q_hat),
        mean_lambda_hat: mean(&lambda_hat),
        mean_lambda_sq: mean(&sq(&lambda_hat)),
        mean_err_q: mean(&err_q),
        median_err_q: median(&err_q),
        mean_err_lambda: mean(&err_lambda),
        median_err_lambda: median(&err_lambda),
        mse_q,
        mse_lambda,
        quantile_abs_err_q: upper_quantile(&abs(&err_q), 1.0 - delta),
        quantile_abs_err_lambda: upper_quantile(&abs(&err_lambda), 1.0 - delta),
        rejection_rate: (!decisions.is_empty()).then(|| mean(&decisions)),
        theory_phi: phi,
        theory_q: q_rate,
        theory_rho: rho,
        ratio,
    })
}

/// Aggregates per grid point and fits log-log rates in `n` for every
/// `(sigma, kappa)` series with at least two sizes.
pub fn summarize(records: &[TrialRecord], task: Task, delta: f64) -> Result<Summary> {
    let mut groups: BTreeMap<usize, Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.grid_point).or_default().push(r);
    }
    let points = groups
        .values()
        .map(|g| summarize_point(g, task, delta))
        .collect::<Result<Vec<_>>>()?;

    let mut series: BTreeMap<(u64, u64), Vec<&PointSummary>> = BTreeMap::new();
    for pt in &points {
        series.entry((pt.sigma.to_bits(), pt.kappa.to_bits())).or_default().push(pt);
    }
    let mut fits = Vec::new();
    for group in series.values() {
        let metrics: [(&str, fn(&PointSummary) -> f64); 3] = [
            ("mean_lambda_sq", |p| p.mean_lambda_sq),
            ("mse_lambda", |p| p.mse_lambda),
            ("mse_q", |p| p.mse_q),
        ];
        for (name, get) in metrics {
            let pts: Vec<(f64, f64)> = group.iter().map(|p| (p.n as f64, get(p))).collect();
            if let Ok(fit) = fit_rate(&pts) {
                fits.push(SeriesFit {
                    sigma: group[0].sigma,
                    kappa: group[0].kappa,
                    metric: name.into(),
                    fit,
                });
            }
        }
    }
    Ok(Summary {
        config_id: records.first().map(|r| r.config_id.clone()).unwrap_or_default(),
        task,
        delta,
        total_trials: records.len(),
        failed_trials: records.iter().filter(|r| !r.is_ok()).count(),
        points,
        fits,
    })
}

pub fn write_records<W: Write>(records: &[TrialRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::io("<records>", e))?;
    Ok(())
}

pub fn read_records<R: std::io::Read>(input: R) -> Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != RECORD_COLUMNS {
        return Err(HarnessError::Config(format!(
            "records header must be `{}`",
            RECORD_COLUMNS.join(",")
        )));
    }
    Ok(r.deserialize().collect::<std::result::Result<Vec<TrialRecord>, _>>()?)
}

/// Writes `records.csv` and `summary.json` into `dir`.
pub fn report(records: &[TrialRecord], summary: &Summary, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let path = dir.join("records.csv");
    let file = std::fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
    write_records(records, std::io::BufWriter::new(file))?;
    crate::io::write_json(summary, &dir.join("summary.json"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(json: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(json).unwrap()
    }

    const SMALL: &str = r#"{
        "regime": "low", "task": "estimate-norm", "replications": 2, "seed": 11,
        "grid": {"n": [20, 40, 80], "p": "n/4", "s": "floor(sqrt(p))", "sigma": [1.0], "kappa": [0.5]}
    }"#;

    #[test]
    fn grid_cardinality_and_sizes() {
        let cfg = config(SMALL);
        let points = cfg.grid_points().unwrap();
        assert_eq!(points.len(), 3);
        assert_eq!((points[1].n, points[1].total, points[1].p, points[1].s), (40, 80, 10, 3));
        let records = run_trials(&cfg, &BetaCache::in_memory()).unwrap();
        assert_eq!(records.len(), 6);
        assert!(records.iter().all(TrialRecord::is_ok));
    }

    #[test]
    fn rerun_is_identical() {
        let cfg = config(SMALL);
        let a = run_trials(&cfg, &BetaCache::in_memory()).unwrap();
        let b = run_trials(&cfg, &BetaCache::in_memory()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn execution_order_does_not_matter() {
        let plan = Plan::new(config(SMALL), &BetaCache::in_memory()).unwrap();
        let forward = plan.run();
        let mut order: Vec<usize> = (0..plan.trial_count()).collect();
        order.reverse();
        order.swap(0, 3);
        let mut shuffled: Vec<TrialRecord> = order.iter().map(|&t| plan.run_trial(t)).collect();
        shuffled.sort_by_key(|r| (r.grid_point, r.seed));
        let mut sorted_forward = forward.clone();
        sorted_forward.sort_by_key(|r| (r.grid_point, r.seed));
        assert_eq!(shuffled, sorted_forward);
    }

    #[test]
    fn error_fields_recompute() {
        let records = run_trials(&config(SMALL), &BetaCache::in_memory()).unwrap();
        for r in &records {
            assert!((r.err_q.unwrap() - (r.q_hat.unwrap() - r.true_q)).abs() <= 1e-12);
            assert!((r.err_lambda.unwrap() - (r.lambda_hat.unwrap() - r.true_lambda())).abs() <= 1e-12);
        }
    }

    #[test]
    fn failed_trials_are_recorded() {
        // p = n leaves OLS without residual degrees of freedom
        let cfg = config(
            r#"{"regime": "low", "replications": 3, "seed": 1,
                "grid": {"n": [8], "p": "n", "s": 2}}"#,
        );
        let records = run_trials(&cfg, &BetaCache::in_memory()).unwrap();
        assert_eq!(records.len(), 3);
        assert!(records.iter().all(|r| r.status.starts_with("error:") && r.q_hat.is_none()));
        let summary = summarize(&records, Task::EstimateNorm, 0.1).unwrap();
        assert_eq!(summary.failed_trials, 3);
        assert_eq!(summary.points[0].failed, 3);
    }

    #[test]
    fn auto_regime_and_split_arity() {
        let cfg = config(
            r#"{"regime": "auto", "replications": 1, "seed": 1,
                "grid": {"n": [40], "p": 10, "s": 3}}"#,
        );
        assert_eq!(cfg.grid_points().unwrap()[0].regime, Regime::Low);
        let cfg = config(
            r#"{"regime": "auto", "replications": 1, "seed": 1,
                "grid": {"n": [40], "p": "2*n", "s": 3}}"#,
        );
        let pt = &cfg.grid_points().unwrap()[0];
        assert_eq!((pt.regime, pt.total), (Regime::High, 120));
        let cfg = config(
            r#"{"regime": "high", "replications": 1, "seed": 1,
                "grid": {"N": [121], "p": 16, "s": 5}}"#,
        );
        let pt = &cfg.grid_points().unwrap()[0];
        assert_eq!((pt.n, pt.total), (60, 121));
    }

    #[test]
    fn config_errors() {
        let bad = [
            r#"{"replications": 0, "seed": 1, "grid": {"n": [10], "p": 4, "s": 1}}"#,
            r#"{"replications": 1, "seed": 1, "grid": {"p": 4, "s": 1}}"#,
            r#"{"replications": 1, "seed": 1, "grid": {"n": [10], "N": [20], "p": 4, "s": 1}}"#,
            r#"{"replications": 1, "seed": 1, "grid": {"n": [10], "p": 4, "s": 5}}"#,
            r#"{"replications": 1, "seed": 1, "grid": {"n": [10], "p": "sqrt(n)", "s": 1}}"#,
            r#"{"replications": 1, "seed": 1, "grid": {"n": [10], "p": 4, "s": 1}, "bogus": 1}"#,
            r#"{"replications": 1, "seed": 1, "grid": {"n": [10], "p": 4, "s": 1}, "delta": 1.5}"#,
        ];
        for text in bad {
            let err = ExperimentConfig::from_json(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}");
        }
    }

    #[test]
    fn two_point_slope_and_quantiles() {
        assert_eq!(upper_quantile(&[3.0, 1.0, 2.0, 4.0], 0.9), 4.0);
        assert_eq!(upper_quantile(&[3.0, 1.0, 2.0, 4.0], 0.5), 2.0);
        assert_eq!(median(&[3.0, 1.0, 2.0, 4.0]), 2.5);
    }

    #[test]
    fn detect_task_calibrates() {
        let cfg = config(
            r#"{"regime": "low", "task": "detect", "replications": 20, "seed": 5,
                "grid": {"n": [40], "p": 8, "s": 2, "kappa": [0.0, 3.0]},
                "tuning": {"calibration_replications": 200}}"#,
        );
        let plan = Plan::new(cfg, &BetaCache::in_memory()).unwrap();
        assert!(plan.betas.iter().all(|b| b.unwrap() > 0.0));
        assert_eq!(plan.betas[0], plan.betas[1]);
        let records = plan.run();
        let summary = summarize(&records, Task::Detect, 0.1).unwrap();
        let strong = summary.points[1].rejection_rate.unwrap();
        assert!(strong > 0.9, "{strong}");
    }

    #[test]
    fn empty_records_csv_has_header() {
        let mut buf = Vec::new();
        write_records(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().trim_end(), RECORD_COLUMNS.join(","));
        assert!(read_records(buf.as_slice()).unwrap().is_empty());
    }

    #[test]
    fn csv_round_trip_and_summary_recompute() {
        let cfg = config(SMALL);
        let records = run_trials(&cfg, &BetaCache::in_memory()).unwrap();
        let mut buf = Vec::new();
        write_records(&records, &mut buf).unwrap();
        let back = read_records(buf.as_slice()).unwrap();
        assert_eq!(back, records);
        let a = summarize(&records, Task::EstimateNorm, 0.1).unwrap();
        let b = summarize(&back, Task::EstimateNorm, 0.1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.points.len(), 3);
        assert!(a.points.iter().all(|p| p.ratio.unwrap() > 0.0 && p.ratio.unwrap().is_finite()));
        assert!(a.fits.iter().any(|f| f.metric == "mse_lambda"));
    }
}
