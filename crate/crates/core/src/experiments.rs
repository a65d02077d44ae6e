//! Monte-Carlo harness: simulate sample paths, fit each method, measure the
//! decision gap against the true optimum, and compare empirical quantiles
//! with the theoretical bounds.
//!
//! Every cell `(method, h, n, path)` draws its data from a seed derived from
//! the base seed and the cell's indices, so results do not depend on how
//! cells are scheduled across workers.

use std::fmt::Debug;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{derive_seed, sample_demand, InverseGammaPrior, Prior};
use crate::bounds::{c9, decision_gap_bound, epsilon_sq, eta_log_bound, kappa_sq, BoundConstants};
use crate::error::{Error, Result};
use crate::newsvendor::{
    growth_constants, true_optimal_decision, uniform_risk_lower_bound, DecisionInterval, ModelRisk,
    NewsvendorParams, Transform,
};
use crate::variational::{decide, fit_nvb, fit_rsvb, FitConfig, RiskSpec};

/// A fitting procedure compared in the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Method {
    Nvb,
    Lcvb,
    Rsvb {
        gamma_bar: f64,
        /// `None` is the constant-risk mode `R ≡ 0`.
        #[serde(default)]
        risk: Option<Transform>,
        decision: Transform,
    },
}

impl Method {
    pub fn label(&self) -> String {
        match *self {
            Method::Nvb => "nvb".into(),
            Method::Lcvb => "lcvb".into(),
            Method::Rsvb {
                gamma_bar,
                risk,
                decision,
            } => format!(
                "rsvb[g={gamma_bar:?};F={};f={}]",
                risk.map_or("none", Transform::label),
                decision.label()
            ),
        }
    }

    pub fn risk_spec(&self) -> RiskSpec {
        match *self {
            Method::Nvb => RiskSpec::naive(),
            Method::Lcvb => RiskSpec::loss_calibrated(),
            Method::Rsvb {
                gamma_bar,
                risk,
                decision,
            } => RiskSpec {
                gamma_bar,
                risk,
                decision,
            },
        }
    }
}

// FNV-1a; stable across platforms and toolchains
fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Settings for the theoretical bound curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSettings {
    pub m: f64,
    pub tau: f64,
    pub delta: f64,
    /// Growth constant for general risk-sensitive methods; defaults to the
    /// newsvendor curvature matching the method's decision transform.
    #[serde(default)]
    pub cf_growth: Option<f64>,
}

impl Default for BoundSettings {
    fn default() -> Self {
        BoundSettings {
            m: 1.0,
            tau: 10.0,
            delta: 2.0,
            cf_growth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub theta0: f64,
    pub b: f64,
    pub h_values: Vec<f64>,
    pub a_min: f64,
    pub a_max: f64,
    pub alpha: f64,
    pub beta: f64,
    pub n_grid: Vec<usize>,
    pub paths: usize,
    pub quantile: f64,
    pub seed: u64,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub bound: BoundSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            theta0: 0.68,
            b: 0.1,
            h_values: (1..=9).map(|k| k as f64 / 1000.0).collect(),
            a_min: 0.001,
            a_max: 75.0,
            alpha: 1.0,
            beta: 4.1,
            n_grid: vec![50, 100, 200, 500, 1000, 2000, 5000],
            paths: 200,
            quantile: 0.9,
            seed: 20_240_917,
            methods: vec![Method::Nvb, Method::Lcvb],
            bound: BoundSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Config(m));
        if !(self.theta0.is_finite() && self.theta0 > 0.0) {
            return cfg_err(format!("theta0 must be positive, got {}", self.theta0));
        }
        if self.h_values.is_empty() {
            return cfg_err("h_values must not be empty".into());
        }
        for &h in &self.h_values {
            NewsvendorParams::new(h, self.b).map_err(|e| Error::Config(e.to_string()))?;
        }
        self.domain()?;
        self.prior()?;
        if self.n_grid.is_empty() || self.n_grid[0] < 2 {
            return cfg_err("n_grid must be non-empty with every n >= 2".into());
        }
        if !self.n_grid.windows(2).all(|w| w[0] < w[1]) {
            return cfg_err("n_grid must be strictly increasing".into());
        }
        if self.paths == 0 {
            return cfg_err("paths must be at least 1".into());
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return cfg_err(format!(
                "quantile must lie in (0, 1), got {}",
                self.quantile
            ));
        }
        if self.methods.is_empty() {
            return cfg_err("at least one method is required".into());
        }
        for m in &self.methods {
            m.risk_spec()
                .validate()
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        let labels: Vec<String> = self.methods.iter().map(Method::label).collect();
        if (1..labels.len()).any(|i| labels[..i].contains(&labels[i])) {
            return cfg_err("methods must be distinct".into());
        }
        let b = &self.bound;
        if !(b.m.is_finite() && b.m > 0.0) {
            return cfg_err(format!("bound.m must be positive, got {}", b.m));
        }
        if !(b.tau.is_finite() && b.tau > 1.0) {
            return cfg_err(format!("bound.tau must exceed 1, got {}", b.tau));
        }
        if !(b.delta.is_finite() && b.delta > 0.0) {
            return cfg_err(format!("bound.delta must be positive, got {}", b.delta));
        }
        if let Some(c) = b.cf_growth {
            if !(c.is_finite() && c > 0.0) {
                return cfg_err(format!("bound.cf_growth must be positive, got {c}"));
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<DecisionInterval> {
        DecisionInterval::new(self.a_min, self.a_max).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn prior(&self) -> Result<Prior> {
        Prior::inverse_gamma(self.alpha, self.beta).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn params(&self, h: f64) -> NewsvendorParams {
        NewsvendorParams { h, b: self.b }
    }

    pub fn inverse_gamma(&self) -> InverseGammaPrior {
        InverseGammaPrior {
            alpha: self.alpha,
            beta: self.beta,
        }
    }

    /// Number of `(method, h, n, path)` cells in a sweep.
    pub fn cell_count(&self) -> usize {
        self.methods.len() * self.h_values.len() * self.n_grid.len() * self.paths
    }
}

/// Outcome of one `(method, h, n, path)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub method: String,
    pub h: f64,
    pub n: usize,
    pub path: usize,
    pub decision: f64,
    /// `|a* − a₀*|`; NaN when the cell failed.
    pub gap: f64,
    pub fit_converged: bool,
    pub elapsed_ms: f64,
    /// Failure message for cells that could not be computed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Runs a single cell. Deterministic given the config and cell indices,
/// except for `elapsed_ms`.
pub fn run_path(
    cfg: &ExperimentConfig,
    method: &Method,
    h_index: usize,
    n_index: usize,
    path: usize,
) -> Result<RunRecord> {
    let h = *cfg
        .h_values
        .get(h_index)
        .ok_or_else(|| Error::domain(format!("h index {h_index} out of range")))?;
    let n = *cfg
        .n_grid
        .get(n_index)
        .ok_or_else(|| Error::domain(format!("n index {n_index} out of range")))?;
    let started = Instant::now();
    let label = method.label();
    let seed = derive_seed(
        cfg.seed,
        &[
            label_hash(&label),
            h_index as u64,
            n_index as u64,
            path as u64,
        ],
    );
    let data = sample_demand(cfg.theta0, n, seed)?;
    let prior = cfg.prior()?;
    let dom = cfg.domain()?;
    let params = cfg.params(h);
    let risk = ModelRisk::Newsvendor(params);
    let fit_cfg = FitConfig::default();

    let (decision, fit_converged) = match method {
        Method::Nvb => {
            let fit = fit_nvb(&data, &prior, &fit_cfg)?;
            (
                decide(&fit.q, Transform::Identity, &risk, &dom, fit_cfg.golden_tol)?,
                fit.converged,
            )
        }
        other => {
            let fit = fit_rsvb(&data, &prior, &other.risk_spec(), &risk, &dom, &fit_cfg)?;
            (fit.decision, fit.converged && fit.fit.converged)
        }
    };
    let target = true_optimal_decision(cfg.theta0, params, dom)?;
    Ok(RunRecord {
        method: label,
        h,
        n,
        path,
        decision,
        gap: (decision - target).abs(),
        fit_converged,
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
        error: None,
    })
}

/// Runs every cell on a pool of `workers` threads. Records come back in
/// canonical `(method, h, n, path)` order following the config's ordering.
pub fn run_sweep(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let mut cells = Vec::with_capacity(cfg.cell_count());
    for (mi, _) in cfg.methods.iter().enumerate() {
        for hi in 0..cfg.h_values.len() {
            for ni in 0..cfg.n_grid.len() {
                for p in 0..cfg.paths {
                    cells.push((mi, hi, ni, p));
                }
            }
        }
    }
    let run = |&(mi, hi, ni, p): &(usize, usize, usize, usize)| {
        let method = &cfg.methods[mi];
        run_path(cfg, method, hi, ni, p).unwrap_or_else(|e| RunRecord {
            method: method.label(),
            h: cfg.h_values[hi],
            n: cfg.n_grid[ni],
            path: p,
            decision: f64::NAN,
            gap: f64::NAN,
            fit_converged: false,
            elapsed_ms: 0.0,
            error: Some(e.to_string()),
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| cells.par_iter().map(run).collect()))
}

/// Nearest-rank quantile: the `⌈level·k⌉`-th smallest gap among the `k`
/// matching records. Failed cells (NaN gaps) rank above every finite gap.
pub fn quantile_gap(
    records: &[RunRecord],
    method: &str,
    h: f64,
    n: usize,
    level: f64,
) -> Result<f64> {
    if !(level > 0.0 && level <= 1.0) {
        return Err(Error::domain(format!(
            "quantile level must lie in (0, 1], got {level}"
        )));
    }
    let mut gaps: Vec<f64> = records
        .iter()
        .filter(|r| r.method == method && r.h == h && r.n == n)
        .map(|r| if r.gap.is_nan() { f64::INFINITY } else { r.gap })
        .collect();
    if gaps.is_empty() {
        return Err(Error::domain(format!(
            "no records for method {method}, h = {h}, n = {n}"
        )));
    }
    gaps.sort_by(f64::total_cmp);
    Ok(gaps[nearest_rank(level, gaps.len()) - 1])
}

fn nearest_rank(level: f64, k: usize) -> usize {
    let x = level * k as f64;
    // absorb representation error such as 0.9 · 10 = 9.000000000000002
    let rank = if (x - x.round()).abs() < 1e-9 {
        x.round()
    } else {
        x.ceil()
    };
    (rank as usize).clamp(1, k)
}

/// Bound constants and growth constant appropriate for `method` at cost `h`.
pub fn method_bound_inputs(
    cfg: &ExperimentConfig,
    method: &Method,
    h: f64,
) -> Result<(BoundConstants, f64, Option<f64>)> {
    let params = cfg.params(h);
    let dom = cfg.domain()?;
    let growth = growth_constants(cfg.theta0, params, dom)?;
    let c9 = c9(cfg.alpha, cfg.beta, cfg.theta0)?;
    let spec = method.risk_spec();
    // C′₈ = F(inf G); None for R ≡ 0
    let c8_prime = match spec.risk {
        None => None,
        Some(f) => Some(f.apply(uniform_risk_lower_bound(params, dom)?)?),
    };
    let cf = match (method, cfg.bound.cf_growth) {
        (Method::Nvb, _) => growth.c1,
        (Method::Lcvb, _) => growth.c_log,
        (Method::Rsvb { .. }, Some(c)) => c,
        (Method::Rsvb { decision, .. }, None) => match decision {
            Transform::Identity => growth.c1,
            Transform::Log => growth.c_log,
        },
    };
    let consts = BoundConstants {
        m: cfg.bound.m,
        tau: cfg.bound.tau,
        delta: cfg.bound.delta,
        c1_growth: growth.c1,
        clog_growth: growth.c_log,
        c9,
        c8: c8_prime.map_or(0.0, |c| (-c).max(0.0)),
    };
    Ok((consts, cf, c8_prime))
}

/// One point of a theoretical bound curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundPoint {
    pub n: usize,
    pub epsilon_sq: f64,
    pub rate_term: f64,
    pub bound: f64,
    pub prob_level: f64,
    pub method: String,
}

/// Decision-gap bound for `method` at cost `h` and sample size `n`.
pub fn bound_point(
    cfg: &ExperimentConfig,
    method: &Method,
    h: f64,
    n: usize,
) -> Result<BoundPoint> {
    let (consts, cf, c8_prime) = method_bound_inputs(cfg, method, h)?;
    let eps = epsilon_sq(n)?;
    let variational = match c8_prime {
        None => kappa_sq(n, consts.c9)?,
        Some(c) => eta_log_bound(n, consts.c9, c)?,
    };
    let rate_term = eps + variational;
    let b = decision_gap_bound(n, rate_term, cf, &consts)?;
    Ok(BoundPoint {
        n,
        epsilon_sq: eps,
        rate_term,
        bound: b.value,
        prob_level: b.level,
        method: method.label(),
    })
}

/// Bound curves over `cfg.n_grid` for every configured method at cost `h`.
pub fn bound_curve(cfg: &ExperimentConfig, h: f64) -> Result<Vec<BoundPoint>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for m in &cfg.methods {
        for &n in &cfg.n_grid {
            out.push(bound_point(cfg, m, h, n)?);
        }
    }
    Ok(out)
}

/// Empirical quantile against the theoretical bound for one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub method: String,
    pub h: f64,
    pub n: usize,
    pub empirical_q: f64,
    pub bound: f64,
    pub prob_level: f64,
    pub dominates: bool,
}

pub fn compare_with_bounds(
    cfg: &ExperimentConfig,
    records: &[RunRecord],
) -> Result<Vec<ComparisonRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for m in &cfg.methods {
        let label = m.label();
        for &h in &cfg.h_values {
            for &n in &cfg.n_grid {
                let empirical_q = quantile_gap(records, &label, h, n, cfg.quantile)?;
                let bp = bound_point(cfg, m, h, n)?;
                rows.push(ComparisonRow {
                    method: label.clone(),
                    h,
                    n,
                    empirical_q,
                    bound: bp.bound,
                    prob_level: bp.prob_level,
                    dominates: bp.bound >= empirical_q,
                });
            }
        }
    }
    Ok(rows)
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let k = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / k, ry.iter().sum::<f64>() / k);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Rows that can be written as CSV.
pub trait CsvRow {
    fn header() -> &'static [&'static str];
    fn fields(&self, include_timing: bool) -> Vec<String>;
}

/// Lossless float formatting (shortest representation that round-trips).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

impl CsvRow for RunRecord {
    fn header() -> &'static [&'static str] {
        &[
            "method",
            "h",
            "n",
            "path",
            "decision",
            "gap",
            "converged",
            "elapsed_ms",
        ]
    }

    fn fields(&self, include_timing: bool) -> Vec<String> {
        vec![
            self.method.clone(),
            fmt_f64(self.h),
            self.n.to_string(),
            self.path.to_string(),
            fmt_f64(self.decision),
            fmt_f64(self.gap),
            self.fit_converged.to_string(),
            if include_timing {
                fmt_f64(self.elapsed_ms)
            } else {
                String::new()
            },
        ]
    }
}

impl CsvRow for ComparisonRow {
    fn header() -> &'static [&'static str] {
        &[
            "method",
            "h",
            "n",
            "empirical_q",
            "bound",
            "prob_level",
            "dominates",
        ]
    }

    fn fields(&self, _: bool) -> Vec<String> {
        vec![
            self.method.clone(),
            fmt_f64(self.h),
            self.n.to_string(),
            fmt_f64(self.empirical_q),
            fmt_f64(self.bound),
            fmt_f64(self.prob_level),
            self.dominates.to_string(),
        ]
    }
}

impl CsvRow for BoundPoint {
    fn header() -> &'static [&'static str] {
        &[
            "n",
            "epsilon_sq",
            "rate_term",
            "bound",
            "prob_level",
            "method",
        ]
    }

    fn fields(&self, _: bool) -> Vec<String> {
        vec![
            self.n.to_string(),
            fmt_f64(self.epsilon_sq),
            fmt_f64(self.rate_term),
            fmt_f64(self.bound),
            fmt_f64(self.prob_level),
            self.method.clone(),
        ]
    }
}

/// Serializes rows as CSV into `out`.
pub fn write_csv<R: CsvRow, W: Write>(
    rows: &[R],
    out: W,
    include_timing: bool,
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(R::header())?;
    for r in rows {
        w.write_record(r.fields(include_timing))?;
    }
    w.flush()
}

/// Path of the metadata file written next to `csv_path`.
pub fn metadata_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Writes `rows` to `path` and `metadata` to the sibling `.meta.json`.
///
/// Both files are written to a temporary file in the destination directory
/// and renamed into place, so an interrupted run never leaves a partial file.
pub fn emit_csv<R: CsvRow, M: Serialize>(
    rows: &[R],
    path: &Path,
    include_timing: bool,
    metadata: &M,
) -> Result<()> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf, include_timing).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    write_atomic(path, &buf)?;
    let meta_path = metadata_path(path);
    let mut json = serde_json::to_vec_pretty(metadata).map_err(|e| Error::Io {
        path: meta_path.clone(),
        source: e.into(),
    })?;
    json.push(b'\n');
    write_atomic(&meta_path, &json)
}

/// Writes `bytes` to `path` via a temporary file and an atomic rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |source: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

/// Run metadata stored next to every emitted CSV.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata<'a> {
    pub code_version: &'static str,
    pub seed: u64,
    pub timing_included: bool,
    pub config: &'a ExperimentConfig,
    pub c9: f64,
}

impl<'a> RunMetadata<'a> {
    pub fn new(config: &'a ExperimentConfig, timing_included: bool) -> Result<Self> {
        Ok(RunMetadata {
            code_version: env!("CARGO_PKG_VERSION"),
            seed: config.seed,
            timing_included,
            config,
            c9: c9(config.alpha, config.beta, config.theta0)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(method: &str, h: f64, n: usize, path: usize, gap: f64) -> RunRecord {
        RunRecord {
            method: method.into(),
            h,
            n,
            path,
            decision: 1.0,
            gap,
            fit_converged: true,
            elapsed_ms: 0.0,
            error: None,
        }
    }

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig {
            h_values: vec![0.005],
            n_grid: vec![50, 200],
            paths: 3,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn quantile_examples() {
        let one = vec![record("nvb", 0.1, 10, 0, 0.37)];
        for level in [0.01, 0.5, 0.9, 1.0] {
            assert_eq!(quantile_gap(&one, "nvb", 0.1, 10, level).unwrap(), 0.37);
        }
        let ten: Vec<_> = (1..=10)
            .map(|k| record("nvb", 0.1, 10, k, k as f64))
            .collect();
        assert_eq!(quantile_gap(&ten, "nvb", 0.1, 10, 0.9).unwrap(), 9.0);
        assert_eq!(quantile_gap(&ten, "nvb", 0.1, 10, 1.0).unwrap(), 10.0);
        assert_eq!(quantile_gap(&ten, "nvb", 0.1, 10, 0.91).unwrap(), 10.0);
        assert!(quantile_gap(&ten, "lcvb", 0.1, 10, 0.9).is_err());
        assert!(quantile_gap(&ten, "nvb", 0.1, 10, 0.0).is_err());
    }

    #[test]
    fn sweep_cardinality_order_and_determinism() {
        let cfg = small_cfg();
        let serial = run_sweep(&cfg, 1).unwrap();
        assert_eq!(serial.len(), 12);
        let parallel = run_sweep(&cfg, 4).unwrap();
        let strip = |v: &[RunRecord]| {
            v.iter()
                .map(|r| RunRecord {
                    elapsed_ms: 0.0,
                    ..r.clone()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&serial), strip(&parallel));
        let keys: Vec<_> = serial
            .iter()
            .map(|r| (r.method.clone(), r.n, r.path))
            .collect();
        assert_eq!(keys[0], ("nvb".to_string(), 50, 0));
        assert_eq!(keys[11], ("lcvb".to_string(), 200, 2));
        for r in &serial {
            assert!(r.error.is_none());
            assert!(r.gap >= 0.0 && r.gap <= cfg.a_max - cfg.a_min);
        }
        let again = run_path(&cfg, &Method::Lcvb, 0, 1, 2).unwrap();
        assert_eq!(
            RunRecord {
                elapsed_ms: 0.0,
                ..again
            },
            strip(&serial)[11]
        );
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let bad = [
            ExperimentConfig {
                paths: 0,
                ..small_cfg()
            },
            ExperimentConfig {
                quantile: 1.0,
                ..small_cfg()
            },
            ExperimentConfig {
                n_grid: vec![100, 50],
                ..small_cfg()
            },
            ExperimentConfig {
                a_max: 0.0,
                ..small_cfg()
            },
            ExperimentConfig {
                methods: vec![],
                ..small_cfg()
            },
            ExperimentConfig {
                methods: vec![Method::Nvb, Method::Nvb],
                ..small_cfg()
            },
            ExperimentConfig {
                bound: BoundSettings {
                    tau: 1.0,
                    ..Default::default()
                },
                ..small_cfg()
            },
            ExperimentConfig {
                h_values: vec![-0.1],
                ..small_cfg()
            },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
    }

    #[test]
    fn bound_curve_decreasing_and_levels() {
        let cfg = ExperimentConfig::default();
        let curve = bound_curve(&cfg, 0.005).unwrap();
        for m in ["nvb", "lcvb"] {
            let pts: Vec<_> = curve.iter().filter(|p| p.method == m).collect();
            assert_eq!(pts.len(), cfg.n_grid.len());
            assert!(pts.windows(2).all(|w| w[1].bound < w[0].bound));
            assert!(pts.iter().all(|p| (p.prob_level - 0.9).abs() < 1e-15));
        }
        // LCVB carries the extra −C′₈ term and the flatter log curvature
        let nvb = bound_point(&cfg, &Method::Nvb, 0.005, 500).unwrap();
        let lcvb = bound_point(&cfg, &Method::Lcvb, 0.005, 500).unwrap();
        assert!(lcvb.rate_term > nvb.rate_term);
    }

    #[test]
    fn rsvb_bound_inputs() {
        let cfg = ExperimentConfig::default();
        let flat = Method::Rsvb {
            gamma_bar: 2.0,
            risk: None,
            decision: Transform::Identity,
        };
        let nvb = bound_point(&cfg, &Method::Nvb, 0.004, 300).unwrap();
        let same = bound_point(&cfg, &flat, 0.004, 300).unwrap();
        assert_eq!(nvb.bound, same.bound);
        let lc_like = Method::Rsvb {
            gamma_bar: 1.0,
            risk: Some(Transform::Log),
            decision: Transform::Log,
        };
        assert_eq!(
            bound_point(&cfg, &lc_like, 0.004, 300).unwrap().bound,
            bound_point(&cfg, &Method::Lcvb, 0.004, 300).unwrap().bound
        );
        let custom = ExperimentConfig {
            bound: BoundSettings {
                cf_growth: Some(0.5),
                ..Default::default()
            },
            ..cfg.clone()
        };
        let m = Method::Rsvb {
            gamma_bar: 5.0,
            risk: Some(Transform::Identity),
            decision: Transform::Identity,
        };
        let (_, cf, c8p) = method_bound_inputs(&custom, &m, 0.004).unwrap();
        assert_eq!(cf, 0.5);
        assert!(c8p.unwrap() > 0.0);
    }

    #[test]
    fn spearman_cases() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 5.0, 6.0, 9.0]) - 1.0).abs() < 1e-15);
        let s = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[5.0, 4.0, 2.0, 3.0, 1.0]);
        assert!((s + 0.9).abs() < 1e-12, "{s}");
    }

    #[test]
    fn emit_writes_header_and_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.csv");
        let cfg = small_cfg();
        let meta = RunMetadata::new(&cfg, false).unwrap();
        emit_csv::<RunRecord, _>(&[], &path, false, &meta).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "method,h,n,path,decision,gap,converged,elapsed_ms\n"
        );
        let meta_json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(metadata_path(&path)).unwrap()).unwrap();
        assert_eq!(meta_json["seed"], cfg.seed);
        assert_eq!(meta_json["config"]["seed"], cfg.seed);

        let rows = vec![record("rsvb[g=1.0;F=log;f=log]", 0.003, 50, 1, 0.1 + 0.2)];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf, false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let line = text.lines().nth(1).unwrap();
        let gap: f64 = line.split(',').nth(5).unwrap().parse().unwrap();
        assert_eq!(gap, 0.1 + 0.2);
        assert!(line.ends_with("true,"));
    }

    #[test]
    fn write_atomic_reports_path() {
        let err = write_atomic(Path::new("/nonexistent-dir/x.csv"), b"x").unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x.csv"));
    }

    #[test]
    fn method_toml_like_round_trip() {
        let methods = vec![
            Method::Nvb,
            Method::Lcvb,
            Method::Rsvb {
                gamma_bar: 5.0,
                risk: Some(Transform::Identity),
                decision: Transform::Log,
            },
            Method::Rsvb {
                gamma_bar: 2.0,
                risk: None,
                decision: Transform::Identity,
            },
        ];
        let json = serde_json::to_string(&methods).unwrap();
        let back: Vec<Method> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, methods);
        assert_eq!(methods[2].label(), "rsvb[g=5.0;F=identity;f=log]");
    }
}
