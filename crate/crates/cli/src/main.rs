//! `rsvb`: simulate demand data, fit variational posteriors, query the exact
//! posterior, evaluate bounds and run the Monte-Carlo experiment.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use rsvb_core::bayes::{build_posterior_oracle, sample_demand, DemandDataset, Prior};
use rsvb_core::experiments::{
    bound_curve, compare_with_bounds, emit_csv, run_sweep, write_atomic, write_csv, BoundSettings,
    ExperimentConfig, Method, RunMetadata,
};
use rsvb_core::newsvendor::{DecisionInterval, ModelRisk, NewsvendorParams, Transform};
use rsvb_core::variational::{decide, fit_nvb, fit_rsvb, FitConfig, RiskSpec};
use rsvb_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "rsvb",
    version,
    about = "Risk-sensitive variational Bayes for the data-driven newsvendor"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw an exponential demand sample and write it as CSV.
    Simulate(SimulateArgs),
    /// Fit a variational posterior and report the decision.
    Fit(FitArgs),
    /// Query the exact posterior: risks, Bayes decision and evidence.
    Oracle(OracleArgs),
    /// Write theoretical decision-gap bound curves as CSV.
    Bounds(BoundsArgs),
    /// Run the Monte-Carlo sweep and compare quantiles with the bounds.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    theta0: f64,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PriorKind {
    InverseGamma,
    /// Conjugate gamma prior, for sanity checks against closed forms.
    Gamma,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RiskArg {
    Identity,
    Log,
    /// Constant risk R ≡ 0.
    None,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DecisionArg {
    Identity,
    Log,
}

impl From<DecisionArg> for Transform {
    fn from(d: DecisionArg) -> Self {
        match d {
            DecisionArg::Identity => Transform::Identity,
            DecisionArg::Log => Transform::Log,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Nvb,
    Lcvb,
    Rsvb,
}

#[derive(Args)]
struct ModelArgs {
    /// Demand CSV with a single `xi` column.
    #[arg(long)]
    data: PathBuf,
    /// Prior shape and rate.
    #[arg(long, num_args = 2, value_names = ["ALPHA", "BETA"], default_values_t = [1.0, 4.1])]
    prior: Vec<f64>,
    #[arg(long, value_enum, default_value_t = PriorKind::InverseGamma)]
    prior_kind: PriorKind,
    /// Holding cost.
    #[arg(long, default_value_t = 0.005)]
    h: f64,
    /// Backorder cost.
    #[arg(long, default_value_t = 0.1)]
    b: f64,
    #[arg(long, default_value_t = 0.001)]
    amin: f64,
    #[arg(long, default_value_t = 75.0)]
    amax: f64,
}

impl ModelArgs {
    fn load(&self) -> Result<(DemandDataset, Prior, NewsvendorParams, DecisionInterval)> {
        let file = File::open(&self.data).map_err(|e| Error::Io {
            path: self.data.clone(),
            source: e,
        })?;
        let data = DemandDataset::read_csv(file, &self.data)?;
        let prior = match self.prior_kind {
            PriorKind::InverseGamma => Prior::inverse_gamma(self.prior[0], self.prior[1])?,
            PriorKind::Gamma => Prior::gamma(self.prior[0], self.prior[1])?,
        };
        Ok((
            data,
            prior,
            NewsvendorParams::new(self.h, self.b)?,
            DecisionInterval::new(self.amin, self.amax)?,
        ))
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    #[command(flatten)]
    model: ModelArgs,
    /// Risk sensitivity (rsvb only).
    #[arg(long, default_value_t = 1.0)]
    gamma_bar: f64,
    /// Risk transform R = F(G) (rsvb only).
    #[arg(long, value_enum, default_value_t = RiskArg::Identity)]
    risk: RiskArg,
    /// Decision transform f (rsvb only).
    #[arg(long = "f", value_enum, default_value_t = DecisionArg::Identity)]
    decision: DecisionArg,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Decision at which risks are evaluated.
    #[arg(long)]
    a: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma_bar: f64,
    /// Transform applied inside the log-exponential risk.
    #[arg(long, value_enum, default_value_t = DecisionArg::Identity)]
    risk: DecisionArg,
    /// Replace the newsvendor model risk with this constant.
    #[arg(long)]
    constant_risk: Option<f64>,
    #[arg(long, default_value_t = 256)]
    quad_order: usize,
}

#[derive(Args)]
struct BoundsArgs {
    /// TOML experiment configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Holding cost for the curve; first configured value when omitted.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    m: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Output file (with a `.meta.json` sibling); standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML experiment configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "RSVB_WORKERS")]
    workers: Option<usize>,
    #[arg(long)]
    outdir: Option<PathBuf>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Record per-cell wall-clock times (breaks byte-identical reruns).
    #[arg(long)]
    timing: bool,
    /// Progress messages on standard error.
    #[arg(short, long)]
    verbose: bool,
}

/// Configuration file schema. Every key is optional and defaults to the
/// reference experiment; unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CliConfig {
    theta0: Option<f64>,
    b: Option<f64>,
    h_values: Option<Vec<f64>>,
    a_min: Option<f64>,
    a_max: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    n_grid: Option<Vec<usize>>,
    paths: Option<usize>,
    quantile: Option<f64>,
    seed: Option<u64>,
    methods: Option<Vec<Method>>,
    bound: Option<BoundSettings>,
    outdir: Option<PathBuf>,
    workers: Option<usize>,
    verbose: Option<bool>,
}

impl CliConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(CliConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            message: e.message().to_string(),
        })
    }

    fn experiment(&self) -> ExperimentConfig {
        let d = ExperimentConfig::default();
        ExperimentConfig {
            theta0: self.theta0.unwrap_or(d.theta0),
            b: self.b.unwrap_or(d.b),
            h_values: self.h_values.clone().unwrap_or(d.h_values),
            a_min: self.a_min.unwrap_or(d.a_min),
            a_max: self.a_max.unwrap_or(d.a_max),
            alpha: self.alpha.unwrap_or(d.alpha),
            beta: self.beta.unwrap_or(d.beta),
            n_grid: self.n_grid.clone().unwrap_or(d.n_grid),
            paths: self.paths.unwrap_or(d.paths),
            quantile: self.quantile.unwrap_or(d.quantile),
            seed: self.seed.unwrap_or(d.seed),
            methods: self.methods.clone().unwrap_or(d.methods),
            bound: self.bound.unwrap_or(d.bound),
        }
    }
}

#[derive(Serialize)]
struct FitReport {
    method: String,
    shape: f64,
    rate: f64,
    objective: f64,
    iterations: usize,
    decision: f64,
    rounds: usize,
    converged: bool,
}

#[derive(Serialize)]
struct OracleReport {
    a: f64,
    gamma_bar: f64,
    posterior_risk: f64,
    bayes_decision: f64,
    logexp_risk: f64,
    size_biased_risk: f64,
    log_evidence: f64,
    posterior_mean: f64,
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let data = sample_demand(args.theta0, args.n, args.seed)?;
    let mut buf = Vec::new();
    data.write_csv(&mut buf).map_err(stdout_err)?;
    match args.out {
        Some(path) => write_atomic(&path, &buf),
        None => std::io::stdout().write_all(&buf).map_err(stdout_err),
    }
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let (data, prior, params, dom) = args.model.load()?;
    let risk = ModelRisk::Newsvendor(params);
    let cfg = FitConfig::default();
    let method = match args.method {
        MethodArg::Nvb => Method::Nvb,
        MethodArg::Lcvb => Method::Lcvb,
        MethodArg::Rsvb => Method::Rsvb {
            gamma_bar: args.gamma_bar,
            risk: match args.risk {
                RiskArg::Identity => Some(Transform::Identity),
                RiskArg::Log => Some(Transform::Log),
                RiskArg::None => None,
            },
            decision: args.decision.into(),
        },
    };
    let report = match method {
        Method::Nvb => {
            let fit = fit_nvb(&data, &prior, &cfg)?;
            FitReport {
                method: method.label(),
                shape: fit.q.shape,
                rate: fit.q.rate,
                objective: fit.objective,
                iterations: fit.iterations,
                decision: decide(&fit.q, Transform::Identity, &risk, &dom, cfg.golden_tol)?,
                rounds: 0,
                converged: fit.converged,
            }
        }
        _ => {
            let spec: RiskSpec = method.risk_spec();
            spec.validate()?;
            let fit = fit_rsvb(&data, &prior, &spec, &risk, &dom, &cfg)?;
            FitReport {
                method: method.label(),
                shape: fit.fit.q.shape,
                rate: fit.fit.q.rate,
                objective: fit.fit.objective,
                iterations: fit.fit.iterations,
                decision: fit.decision,
                rounds: fit.rounds,
                converged: fit.converged && fit.fit.converged,
            }
        }
    };
    print_json(&report)
}

fn cmd_oracle(args: OracleArgs) -> Result<()> {
    let (data, prior, params, dom) = args.model.load()?;
    if !dom.contains(args.a) {
        return Err(Error::Config(format!(
            "a = {} lies outside [{}, {}]",
            args.a, dom.a_min, dom.a_max
        )));
    }
    if !(args.gamma_bar.is_finite() && args.gamma_bar > 0.0) {
        return Err(Error::Config(format!(
            "gamma-bar must be positive, got {}",
            args.gamma_bar
        )));
    }
    let risk = match args.constant_risk {
        Some(c) if !(c.is_finite() && c > 0.0) => {
            return Err(Error::Config(format!(
                "constant-risk must be positive, got {c}"
            )))
        }
        Some(c) => ModelRisk::Constant(c),
        None => ModelRisk::Newsvendor(params),
    };
    let oracle = build_posterior_oracle(&data, &prior, args.quad_order)?;
    print_json(&OracleReport {
        a: args.a,
        gamma_bar: args.gamma_bar,
        posterior_risk: oracle.posterior_risk(args.a, &risk)?,
        bayes_decision: oracle.bayes_decision(&risk, &dom)?,
        logexp_risk: oracle.logexp_risk(args.a, args.gamma_bar, &risk, args.risk.into())?,
        size_biased_risk: oracle.size_biased_risk(args.a, &risk)?,
        log_evidence: oracle.log_evidence(),
        posterior_mean: oracle.mean(),
    })
}

fn cmd_bounds(args: BoundsArgs) -> Result<()> {
    let mut cfg = CliConfig::load(args.config.as_deref())?.experiment();
    cfg.bound.m = args.m.unwrap_or(cfg.bound.m);
    cfg.bound.tau = args.tau.unwrap_or(cfg.bound.tau);
    cfg.bound.delta = args.delta.unwrap_or(cfg.bound.delta);
    if let Some(h) = args.h {
        cfg.h_values = vec![h];
    }
    cfg.validate()?;
    let curve = bound_curve(&cfg, cfg.h_values[0])?;
    match args.out {
        Some(path) => emit_csv(&curve, &path, false, &RunMetadata::new(&cfg, false)?),
        None => write_csv(&curve, std::io::stdout().lock(), false).map_err(stdout_err),
    }
}

fn cmd_experiment(args: ExperimentArgs) -> Result<()> {
    let file = CliConfig::load(args.config.as_deref())?;
    let mut cfg = file.experiment();
    cfg.paths = args.paths.unwrap_or(cfg.paths);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.validate()?;
    let workers = args
        .workers
        .or(file.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(Error::Config("workers must be at least 1".into()));
    }
    let outdir = args
        .outdir
        .or(file.outdir)
        .unwrap_or_else(|| PathBuf::from("."));
    let verbose = args.verbose || file.verbose.unwrap_or(false);
    std::fs::create_dir_all(&outdir).map_err(|e| Error::Io {
        path: outdir.clone(),
        source: e,
    })?;

    if verbose {
        eprintln!("running {} cells on {workers} workers", cfg.cell_count());
    }
    let records = run_sweep(&cfg, workers)?;
    let rows = compare_with_bounds(&cfg, &records)?;
    let meta = RunMetadata::new(&cfg, args.timing)?;
    let records_path = outdir.join("records.csv");
    let comparison_path = outdir.join("comparison.csv");
    emit_csv(&records, &records_path, args.timing, &meta)?;
    emit_csv(&rows, &comparison_path, false, &meta)?;

    let failed = records.iter().filter(|r| r.error.is_some()).count();
    let unconverged = records.iter().filter(|r| !r.fit_converged).count();
    let dominated = rows.iter().filter(|r| r.dominates).count();
    println!(
        "records: {} ({failed} failed, {unconverged} not converged)",
        records_path.display()
    );
    println!(
        "comparison: {} (bound dominates {dominated}/{} points)",
        comparison_path.display(),
        rows.len()
    );
    if verbose {
        for r in records.iter().filter(|r| r.error.is_some()) {
            eprintln!(
                "cell {} h={} n={} path={}: {}",
                r.method,
                r.h,
                r.n,
                r.path,
                r.error.as_deref().unwrap_or("")
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Experiment(a) => cmd_experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
