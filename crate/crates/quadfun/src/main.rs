use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use quadfun::calibrate::{BetaCache, CalibrationKey, DEFAULT_REPLICATIONS};
use quadfun::harness::{read_records, report, summarize, Plan, Task};
use quadfun::io::{read_sample_file, write_json, write_sample, write_sample_file, TruthSidecar};
use quadfun::{ExperimentConfig, HarnessError, Result};
use quadfun_core::highdim::{self, Prelim};
use quadfun_core::lower_bounds::{
    bayes_testing_risk_bound, hypergeometric_mgf_bound, minimax_testing_lower_radius, q_lower_bound, tau_from_rho,
};
use quadfun_core::model::{sample_sparse_theta, SignPattern};
use quadfun_core::pipeline::{choose_regime, DEFAULT_GAMMA};
use quadfun_core::{
    lowdim, seeded_rng, sqrt_slope_fit, synthesize, DesignLaw, Dimensions, Estimator, HighDimParams, ModelSpec,
    NoiseLaw, Regime, RegressionSample, SolverOptions, TuningParams,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "quadfun", version, about = "Estimate and test the signal energy of a sparse linear model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic sample.
    Gen(GenArgs),
    /// Estimate ‖θ‖₂² and ‖θ‖₂ from a sample.
    Estimate(EstimateArgs),
    /// Test θ = 0 against sparse alternatives.
    Detect(DetectArgs),
    /// Fit Square-Root SLOPE on a whole sample.
    SlopeFit(SlopeArgs),
    /// Run a Monte Carlo experiment.
    Simulate(SimulateArgs),
    /// Re-aggregate a records file.
    Rates(RatesArgs),
    /// Evaluate the lower-bound formulas.
    LowerBound(LowerBoundArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long = "N")]
    total: usize,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    s: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Norm of θ.
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    #[arg(long, default_value = "standard-normal")]
    design: DesignLaw,
    #[arg(long, default_value = "standard-normal")]
    noise: NoiseLaw,
    #[arg(long, default_value = "equal")]
    signs: SignPattern,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sample CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Low,
    High,
    Auto,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long, value_enum, default_value = "auto")]
    regime: RegimeArg,
    #[arg(long)]
    s: usize,
    /// Threshold constant; regime default when absent.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = highdim::DEFAULT_C1)]
    c1: f64,
    #[arg(long, default_value = "srs")]
    prelim: Prelim,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    estimate: EstimateArgs,
    #[arg(long, conflicts_with = "delta", required_unless_present = "delta")]
    beta: Option<f64>,
    /// Calibrate β as the null (1 − δ) quantile.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_REPLICATIONS)]
    calibration_replications: usize,
    #[arg(long, default_value_t = 0)]
    calibration_seed: u64,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SlopeArgs {
    #[arg(long, default_value_t = highdim::DEFAULT_C1)]
    c1: f64,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Directory receiving records.csv and summary.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    EstimateNorm,
    EstimateQ,
    Detect,
}

#[derive(Args)]
struct RatesArgs {
    #[arg(long)]
    from: PathBuf,
    #[arg(long, value_enum, default_value = "estimate-norm")]
    task: TaskArg,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Summary JSON; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LowerBoundArgs {
    #[arg(long)]
    p: usize,
    #[arg(long = "N")]
    total: usize,
    #[arg(long)]
    s: usize,
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
}

fn print(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json value serializes"));
}

fn gen(a: GenArgs) -> Result<()> {
    let dims = Dimensions::new(a.total, a.p, a.s)?;
    let mut rng = seeded_rng(a.seed);
    let theta = sample_sparse_theta(a.p, a.s, a.kappa, a.signs, &mut rng)?;
    let spec = ModelSpec::new(theta.clone(), a.sigma, a.design, a.noise)?;
    let sample = synthesize(&spec, &dims, &mut rng)?;
    match &a.out {
        Some(path) => write_sample_file(&sample, path)?,
        None => write_sample(&sample, std::io::stdout().lock())?,
    }
    if let Some(path) = &a.truth {
        let truth = TruthSidecar {
            theta: theta.iter().copied().collect(),
            sigma: a.sigma,
            seed: a.seed,
        };
        write_json(&truth, path)?;
    }
    Ok(())
}

fn estimator(a: &EstimateArgs, sample: &RegressionSample) -> Estimator {
    let regime = match a.regime {
        RegimeArg::Low => Regime::Low,
        RegimeArg::High => Regime::High,
        RegimeArg::Auto => choose_regime(sample.dim(), sample.rows(), a.gamma),
    };
    match regime {
        Regime::Low => Estimator::Low(TuningParams {
            alpha: a.alpha.unwrap_or(lowdim::DEFAULT_ALPHA),
            beta: 1.0,
        }),
        Regime::High => Estimator::High(HighDimParams {
            alpha: a.alpha.unwrap_or(highdim::DEFAULT_ALPHA),
            c1: a.c1,
            solver: SolverOptions::default(),
            prelim: a.prelim,
        }),
    }
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let sample = read_sample_file(&a.input)?;
    let est = estimator(&a, &sample).estimate(&sample, a.s)?;
    print(&serde_json::to_value(&est)?);
    Ok(())
}

fn detect(a: DetectArgs) -> Result<()> {
    let sample = read_sample_file(&a.estimate.input)?;
    let est = estimator(&a.estimate, &sample);
    let (p, total, s) = (sample.dim(), sample.rows(), a.estimate.s);
    let beta = match (a.beta, a.delta) {
        (Some(b), _) => b,
        (None, Some(delta)) => {
            let key = CalibrationKey::new(&est, p, total, s, delta, a.calibration_replications, a.calibration_seed);
            let cache = match &a.cache_dir {
                Some(dir) => BetaCache::with_dir(dir),
                None => BetaCache::in_memory(),
            };
            cache.get_or_calibrate(&est, &key)?
        }
        (None, None) => unreachable!("clap requires --beta or --delta"),
    };
    let d = est.detect(&sample, s, beta)?;
    print(&json!({
        "decision": d.decision,
        "lambda_hat": d.lambda_hat,
        "threshold": d.threshold,
        "beta": d.beta,
        "sigma_hat": d.estimate.sigma_hat,
        "branch": d.estimate.branch,
        "regime": d.estimate.regime,
        "parts": d.estimate.parts,
        "n_per_split": d.estimate.n_per_split,
        "dropped_rows": d.estimate.dropped_rows,
    }));
    Ok(())
}

fn slope_fit(a: SlopeArgs) -> Result<()> {
    let sample = read_sample_file(&a.input)?;
    let defaults = SolverOptions::default();
    let opts = SolverOptions {
        max_iter: a.max_iter.unwrap_or(defaults.max_iter),
        tol: a.tol.unwrap_or(defaults.tol),
    };
    let fit = sqrt_slope_fit(&sample.x, &sample.y, a.c1, opts)?;
    let theta: Vec<f64> = fit.theta_hat.iter().copied().collect();
    print(&json!({
        "theta_hat": theta,
        "sigma_hat": fit.sigma_hat,
        "objective": fit.objective,
        "iterations": fit.iterations,
        "converged": fit.converged,
    }));
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let config = ExperimentConfig::from_file(&a.config)?;
    let cache = match &a.cache_dir {
        Some(dir) => BetaCache::with_dir(dir),
        None => BetaCache::in_memory(),
    };
    let task = config.task;
    let delta = config.delta;
    let plan = Plan::new(config, &cache)?;
    let records = plan.run();
    let summary = summarize(&records, task, delta)?;
    report(&records, &summary, &a.out)?;
    eprintln!(
        "{} trials ({} failed) over {} grid points -> {}",
        summary.total_trials,
        summary.failed_trials,
        summary.points.len(),
        a.out.display()
    );
    Ok(())
}

fn rates(a: RatesArgs) -> Result<()> {
    let file = std::fs::File::open(&a.from).map_err(|e| HarnessError::io(&a.from, e))?;
    let records = read_records(std::io::BufReader::new(file))?;
    if !(a.delta > 0.0 && a.delta < 1.0) {
        return Err(HarnessError::Config("delta must lie in (0, 1)".into()));
    }
    let task = match a.task {
        TaskArg::EstimateNorm => Task::EstimateNorm,
        TaskArg::EstimateQ => Task::EstimateQ,
        TaskArg::Detect => Task::Detect,
    };
    let summary = summarize(&records, task, a.delta)?;
    match &a.out {
        Some(path) => write_json(&summary, path)?,
        None => print(&serde_json::to_value(&summary)?),
    }
    Ok(())
}

fn lower_bound(a: LowerBoundArgs) -> Result<()> {
    let radius = minimax_testing_lower_radius(a.p, a.total, a.s, a.delta)?;
    let tau = tau_from_rho(radius.r);
    let mgf = hypergeometric_mgf_bound(a.p, radius.s_truncated, a.total, tau)?;
    let risk = bayes_testing_risk_bound(a.p, radius.s_truncated, a.total, tau)?;
    let q_bar = q_lower_bound(a.p, a.total, a.s, a.sigma, a.kappa)?;
    print(&json!({
        "A": radius.a,
        "r": radius.r,
        "rho": radius.rho,
        "s_truncated": radius.s_truncated,
        "tau": tau,
        "q_bar": q_bar,
        "mgf": mgf,
        "bayes_risk_bound": risk,
    }));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Estimate(a) => estimate(a),
        Command::Detect(a) => detect(a),
        Command::SlopeFit(a) => slope_fit(a),
        Command::Simulate(a) => simulate(a),
        Command::Rates(a) => rates(a),
        Command::LowerBound(a) => lower_bound(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
