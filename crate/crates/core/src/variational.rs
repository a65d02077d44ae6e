//! Gamma variational family and the naive, loss-calibrated and general
//! risk-sensitive fitting procedures.
//!
//! Every fit maximizes an objective over `q = Gamma(s, r)` parameterized as
//! `(ln(s − 1 − 1e-6), ln r)`, which keeps `s > 1` so that `E_q[1/θ]` and the
//! newsvendor expectations exist. The general objective for a fixed
//! decision `a` is
//!
//! ```text
//! γ̄′ E_q[R(a, θ)] + ELBO(q),    R = F∘G
//! ```
//!
//! which differs from `γ̄′ E_q[R] − KL(q ‖ π_n)` by the log evidence only.

use serde::{Deserialize, Serialize};

use crate::bayes::{joint_mode, DemandDataset, PosteriorOracle, Prior};
use crate::error::{ensure_positive, Error, Result};
use crate::newsvendor::{DecisionInterval, ModelRisk, Transform};
use crate::optim::{golden_section, nelder_mead, NelderMeadConfig};
use crate::special::{digamma, legendre_grid, ln_gamma, trigamma};

/// Lower limit on the shape parameter, `1 + 1e-6`.
pub const SHAPE_FLOOR: f64 = 1.0 + 1e-6;

/// `Gamma(shape, rate)` with density `r^s/Γ(s) θ^{s−1} e^{−rθ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationalGamma {
    pub shape: f64,
    pub rate: f64,
}

impl VariationalGamma {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape.is_finite() && shape > 1.0) {
            return Err(Error::domain(format!(
                "variational shape must exceed 1, got {shape}"
            )));
        }
        ensure_positive("variational rate", rate)?;
        Ok(VariationalGamma { shape, rate })
    }

    /// Maps unconstrained `(ln(s − SHAPE_FLOOR), ln r)` to a valid member.
    pub fn from_unconstrained(x: &[f64]) -> Result<Self> {
        let shape = SHAPE_FLOOR + x[0].exp();
        let rate = x[1].exp();
        if !(shape.is_finite() && rate.is_finite() && rate > 0.0) {
            return Err(Error::domain(format!(
                "unconstrained point {x:?} maps outside the family"
            )));
        }
        Ok(VariationalGamma { shape, rate })
    }

    pub fn to_unconstrained(&self) -> [f64; 2] {
        [
            (self.shape - SHAPE_FLOOR).max(f64::MIN_POSITIVE).ln(),
            self.rate.ln(),
        ]
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn sd(&self) -> f64 {
        self.shape.sqrt() / self.rate
    }

    fn log_norm(&self) -> f64 {
        self.shape * self.rate.ln() - ln_gamma(self.shape).expect("shape > 1")
    }

    pub fn log_density(&self, theta: f64) -> f64 {
        self.log_norm() + (self.shape - 1.0) * theta.ln() - self.rate * theta
    }
}

/// Closed-form moments of a gamma distribution used by the objectives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaExpectations {
    pub e_theta: f64,
    pub e_inv_theta: f64,
    pub e_log_theta: f64,
    /// `E[e^{−aθ}/θ]`.
    pub e_decay: f64,
}

pub fn gamma_expectations(q: &VariationalGamma, a: f64) -> Result<GammaExpectations> {
    let (s, r) = (q.shape, q.rate);
    if s <= 1.0 {
        return Err(Error::domain(format!("E[1/θ] requires shape > 1, got {s}")));
    }
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::domain(format!(
            "decision must be non-negative, got {a}"
        )));
    }
    let e_inv_theta = r / (s - 1.0);
    Ok(GammaExpectations {
        e_theta: s / r,
        e_inv_theta,
        e_log_theta: digamma(s)? - r.ln(),
        // r^s / ((s−1)(r+a)^{s−1})
        e_decay: e_inv_theta * ((s - 1.0) * -(a / r).ln_1p()).exp(),
    })
}

/// `E_q[G(a, θ)]` in closed form.
pub fn expected_model_risk(q: &VariationalGamma, a: f64, risk: &ModelRisk) -> Result<f64> {
    match *risk {
        ModelRisk::Constant(c) => Ok(c),
        ModelRisk::Newsvendor(p) => {
            let m = gamma_expectations(q, a)?;
            Ok(p.h * a - p.h * m.e_inv_theta + (p.b + p.h) * m.e_decay)
        }
    }
}

const LOG_RISK_NODES: usize = 256;
const LOG_RISK_WIDTH: f64 = 12.0;
const LOG_RISK_FLOOR: f64 = 1e-12;

/// `E_q[ln G(a, θ)]` by composite Gauss–Legendre quadrature over
/// `mean ± 12 sd` (floored at 1e-12), normalized by the captured mass of q.
pub fn expected_log_model_risk(q: &VariationalGamma, a: f64, risk: &ModelRisk) -> Result<f64> {
    expected_log_model_risk_with(q, a, risk, LOG_RISK_NODES)
}

pub(crate) fn expected_log_model_risk_with(
    q: &VariationalGamma,
    a: f64,
    risk: &ModelRisk,
    nodes: usize,
) -> Result<f64> {
    if let ModelRisk::Constant(c) = *risk {
        return Transform::Log.apply(c);
    }
    let lo = (q.mean() - LOG_RISK_WIDTH * q.sd()).max(LOG_RISK_FLOOR);
    let hi = q.mean() + LOG_RISK_WIDTH * q.sd();
    let grid = legendre_grid(nodes, lo, hi)?;
    let log_norm = q.log_norm();
    let (mut mass, mut acc) = (0.0, 0.0);
    for (&t, &w) in grid.nodes().iter().zip(grid.weights()) {
        let d = w * (log_norm + (q.shape - 1.0) * t.ln() - q.rate * t).exp();
        let g = risk.eval(a, t);
        let lg = g.ln();
        if !lg.is_finite() {
            return Err(Error::Evaluation { node: t, value: g });
        }
        mass += d;
        acc += d * lg;
    }
    Ok(acc / mass)
}

/// `E_q[f(G(a, θ))]`.
pub fn expected_transformed_risk(
    q: &VariationalGamma,
    a: f64,
    risk: &ModelRisk,
    f: Transform,
) -> Result<f64> {
    match f {
        Transform::Identity => expected_model_risk(q, a, risk),
        Transform::Log => expected_log_model_risk(q, a, risk),
    }
}

/// Differential entropy `s − ln r + ln Γ(s) + (1 − s) ψ(s)`.
pub fn entropy(q: &VariationalGamma) -> f64 {
    let s = q.shape;
    s - q.rate.ln() + ln_gamma(s).expect("shape > 0") + (1.0 - s) * digamma(s).expect("shape > 0")
}

fn expected_log_prior(q: &VariationalGamma, prior: &Prior, e_log: f64) -> f64 {
    let norm = prior.log_norm();
    match *prior {
        Prior::InverseGamma(p) => {
            norm - (p.alpha + 1.0) * e_log - p.beta * q.rate / (q.shape - 1.0)
        }
        Prior::Gamma(p) => norm + (p.alpha - 1.0) * e_log - p.beta * q.mean(),
    }
}

/// Evidence lower bound `E_q[ln p(θ, X)] + H(q)`, all in closed form.
pub fn elbo(q: &VariationalGamma, data: &DemandDataset, prior: &Prior) -> Result<f64> {
    if q.shape <= 1.0 {
        return Err(Error::domain(format!(
            "ELBO requires shape > 1, got {}",
            q.shape
        )));
    }
    let e_log = digamma(q.shape)? - q.rate.ln();
    let e_loglik = data.n() as f64 * e_log - q.mean() * data.sum();
    Ok(e_loglik + expected_log_prior(q, prior, e_log) + entropy(q))
}

/// Gradient of [`elbo`] with respect to the unconstrained coordinates
/// `(ln(s − SHAPE_FLOOR), ln r)`.
pub fn elbo_gradient(
    q: &VariationalGamma,
    data: &DemandDataset,
    prior: &Prior,
) -> Result<[f64; 2]> {
    let (s, r) = (q.shape, q.rate);
    let n = data.n() as f64;
    let sum = data.sum();
    let tri = trigamma(s)?;
    let (ds, dr) = match *prior {
        Prior::InverseGamma(p) => (
            (n - p.alpha - s) * tri + 1.0 - sum / r + p.beta * r / ((s - 1.0) * (s - 1.0)),
            (p.alpha - n) / r + s * sum / (r * r) - p.beta / (s - 1.0),
        ),
        Prior::Gamma(p) => (
            (n + p.alpha - s) * tri + 1.0 - (sum + p.beta) / r,
            -(n + p.alpha) / r + s * (sum + p.beta) / (r * r),
        ),
    };
    Ok([ds * (s - SHAPE_FLOOR), dr * r])
}

/// `KL(q ‖ π_n)` using the oracle's log evidence.
pub fn kl_to_posterior(q: &VariationalGamma, oracle: &PosteriorOracle) -> Result<f64> {
    Ok(oracle.log_evidence() - elbo(q, oracle.data(), oracle.prior())?)
}

/// Risk sensitivity `γ̄′ > 0`, the transform `F` defining `R = F∘G` and the
/// decision transform `f`.
///
/// `risk: None` is the constant-risk mode `R ≡ 0`, under which the q-step
/// is the plain ELBO fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskSpec {
    pub gamma_bar: f64,
    pub risk: Option<Transform>,
    pub decision: Transform,
}

impl RiskSpec {
    pub fn new(gamma_bar: f64, risk: Option<Transform>, decision: Transform) -> Result<Self> {
        let s = RiskSpec {
            gamma_bar,
            risk,
            decision,
        };
        s.validate()?;
        Ok(s)
    }

    /// The loss-calibrated setting: `γ̄′ = 1`, `F = f = ln`.
    pub fn loss_calibrated() -> Self {
        RiskSpec {
            gamma_bar: 1.0,
            risk: Some(Transform::Log),
            decision: Transform::Log,
        }
    }

    /// `R ≡ 0` with decisions taken on `E_q[G]`.
    pub fn naive() -> Self {
        RiskSpec {
            gamma_bar: 1.0,
            risk: None,
            decision: Transform::Identity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("gamma_bar", self.gamma_bar)
    }
}

/// `γ̄′ E_q[F(G(a, θ))] + ELBO(q)`.
pub fn rsvb_objective(
    a: f64,
    q: &VariationalGamma,
    data: &DemandDataset,
    prior: &Prior,
    spec: &RiskSpec,
    risk: &ModelRisk,
) -> Result<f64> {
    let calibration = match spec.risk {
        None => 0.0,
        Some(f) => spec.gamma_bar * expected_transformed_risk(q, a, risk, f)?,
    };
    Ok(calibration + elbo(q, data, prior)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub nelder_mead: NelderMeadConfig,
    /// Maximum alternation rounds between q-steps and decision steps.
    pub max_rounds: usize,
    /// Alternation stops once the decision moves less than this.
    pub decision_tol: f64,
    /// Golden-section tolerance on the decision.
    pub golden_tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            nelder_mead: NelderMeadConfig::default(),
            max_rounds: 100,
            decision_tol: 1e-6,
            golden_tol: 1e-8,
        }
    }
}

/// Outcome of maximizing an objective over the gamma family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    #[serde(flatten)]
    pub q: VariationalGamma,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Best objective after each optimizer iteration; nondecreasing.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

/// Laplace-based starting point: `s₀ = max(2, m² c)`, `r₀ = s₀/m` for the
/// joint mode `m` and curvature `c`.
pub fn laplace_start(data: &DemandDataset, prior: &Prior) -> Result<VariationalGamma> {
    let (m, c) = joint_mode(data, prior)?;
    let s0 = (m * m * c).max(2.0);
    VariationalGamma::new(s0, s0 / m)
}

fn maximize<F>(mut objective: F, start: &VariationalGamma, cfg: &FitConfig) -> Result<FitResult>
where
    F: FnMut(&VariationalGamma) -> Result<f64>,
{
    let x0 = start.to_unconstrained();
    let m = nelder_mead(
        |x| {
            let q = VariationalGamma::from_unconstrained(x)?;
            Ok(-objective(&q)?)
        },
        &x0,
        &cfg.nelder_mead,
    )?;
    if !m.value.is_finite() {
        return Err(Error::domain(
            "objective is not finite at the starting point",
        ));
    }
    Ok(FitResult {
        q: VariationalGamma::from_unconstrained(&m.x)?,
        objective: -m.value,
        iterations: m.iterations,
        converged: m.converged,
        trace: m.trace.into_iter().map(|v| -v).collect(),
    })
}

/// Naive VB: maximize the ELBO.
pub fn fit_nvb(data: &DemandDataset, prior: &Prior, cfg: &FitConfig) -> Result<FitResult> {
    fit_nvb_from(data, prior, cfg, &laplace_start(data, prior)?)
}

/// [`fit_nvb`] from a caller-chosen starting point.
pub fn fit_nvb_from(
    data: &DemandDataset,
    prior: &Prior,
    cfg: &FitConfig,
    start: &VariationalGamma,
) -> Result<FitResult> {
    if data.n() == 0 {
        return Err(Error::domain("dataset is empty"));
    }
    maximize(|q| elbo(q, data, prior), start, cfg)
}

/// Maximize the risk-sensitive objective over q for a fixed decision.
pub fn fit_q_given_a(
    a: f64,
    data: &DemandDataset,
    prior: &Prior,
    spec: &RiskSpec,
    risk: &ModelRisk,
    cfg: &FitConfig,
) -> Result<FitResult> {
    spec.validate()?;
    if data.n() == 0 {
        return Err(Error::domain("dataset is empty"));
    }
    maximize(
        |q| rsvb_objective(a, q, data, prior, spec, risk),
        &laplace_start(data, prior)?,
        cfg,
    )
}

/// `argmin_{a ∈ dom} E_q[f(G(a, θ))]` by golden-section search.
pub fn decide(
    q: &VariationalGamma,
    f: Transform,
    risk: &ModelRisk,
    dom: &DecisionInterval,
    tol: f64,
) -> Result<f64> {
    dom.validate()?;
    golden_section(
        |a| expected_transformed_risk(q, a, risk, f),
        dom.a_min,
        dom.a_max,
        tol,
    )
}

/// Result of the alternating decision/posterior optimization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionFit {
    pub decision: f64,
    pub fit: FitResult,
    pub rounds: usize,
    /// True when the decision settled before the round limit.
    pub converged: bool,
    /// Decision proposed after each round.
    #[serde(skip)]
    pub decisions: Vec<f64>,
    /// Inner maximum `max_q` of the objective at the decision of each round.
    #[serde(skip)]
    pub outer_values: Vec<f64>,
    /// Optimizer trace of the q-step in each round.
    #[serde(skip)]
    pub inner_traces: Vec<Vec<f64>>,
}

/// Loss-calibrated VB: [`fit_rsvb`] with `γ̄′ = 1` and `F = f = ln`.
pub fn fit_lcvb(
    data: &DemandDataset,
    prior: &Prior,
    risk: &ModelRisk,
    dom: &DecisionInterval,
    cfg: &FitConfig,
) -> Result<DecisionFit> {
    fit_rsvb(data, prior, &RiskSpec::loss_calibrated(), risk, dom, cfg)
}

/// General risk-sensitive VB.
///
/// Starts from the naive decision `argmin_a E_{q_NV}[G]`, then alternates
/// `q_k = argmax_q objective(a_k, q)` and `a_{k+1} = argmin_a E_{q_k}[f(G)]`
/// until the decision moves less than `cfg.decision_tol`. If the round limit
/// is hit, the round with the smallest inner maximum is returned and the
/// result is flagged as not converged.
pub fn fit_rsvb(
    data: &DemandDataset,
    prior: &Prior,
    spec: &RiskSpec,
    risk: &ModelRisk,
    dom: &DecisionInterval,
    cfg: &FitConfig,
) -> Result<DecisionFit> {
    spec.validate()?;
    dom.validate()?;
    let naive = fit_nvb(data, prior, cfg)?;
    let mut a = decide(&naive.q, Transform::Identity, risk, dom, cfg.golden_tol)?;

    let mut decisions = Vec::new();
    let mut outer_values = Vec::new();
    let mut inner_traces = Vec::new();
    let mut best: Option<(f64, FitResult)> = None;
    for round in 1..=cfg.max_rounds.max(1) {
        let fit = if spec.risk.is_none() {
            naive.clone()
        } else {
            fit_q_given_a(a, data, prior, spec, risk, cfg)?
        };
        let next = decide(&fit.q, spec.decision, risk, dom, cfg.golden_tol)?;
        decisions.push(next);
        outer_values.push(fit.objective);
        inner_traces.push(fit.trace.clone());
        if (next - a).abs() < cfg.decision_tol {
            return Ok(DecisionFit {
                decision: next,
                fit,
                rounds: round,
                converged: true,
                decisions,
                outer_values,
                inner_traces,
            });
        }
        if best
            .as_ref()
            .is_none_or(|(_, b)| fit.objective < b.objective)
        {
            best = Some((next, fit));
        }
        a = next;
    }
    let (decision, fit) = best.expect("at least one round");
    Ok(DecisionFit {
        decision,
        fit,
        rounds: decisions.len(),
        converged: false,
        decisions,
        outer_values,
        inner_traces,
    })
}
