//! The newsvendor decision problem under exponential demand.
//!
//! The loss is `ℓ(a, ξ) = h (a − ξ)⁺ + b (ξ − a)⁺` and, for demand
//! `ξ ~ Exp(θ)`, the model risk has the closed form
//!
//! ```text
//! G(a, θ) = h a − h/θ + (b + h) e^{−aθ}/θ
//! ```
//!
//! which is convex in `a` and minimized at `a* = ln((b + h)/h) / θ`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};

/// Holding cost `h` and backorder cost `b`, both per unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewsvendorParams {
    pub h: f64,
    pub b: f64,
}

impl NewsvendorParams {
    pub fn new(h: f64, b: f64) -> Result<Self> {
        let p = NewsvendorParams { h, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("holding cost h", self.h)?;
        ensure_positive("backorder cost b", self.b)
    }

    /// Critical ratio quantity `ln((b + h)/h)`, the optimal order times θ.
    pub fn log_ratio(&self) -> f64 {
        (self.b / self.h).ln_1p()
    }
}

/// Compact decision space `[a_min, a_max]` with `a_min > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionInterval {
    pub a_min: f64,
    pub a_max: f64,
}

impl DecisionInterval {
    pub fn new(a_min: f64, a_max: f64) -> Result<Self> {
        let d = DecisionInterval { a_min, a_max };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("a_min", self.a_min)?;
        if !(self.a_max.is_finite() && self.a_max > self.a_min) {
            return Err(Error::domain(format!(
                "a_max must exceed a_min, got [{}, {}]",
                self.a_min, self.a_max
            )));
        }
        Ok(())
    }

    pub fn clamp(&self, a: f64) -> f64 {
        a.clamp(self.a_min, self.a_max)
    }

    pub fn contains(&self, a: f64) -> bool {
        a >= self.a_min && a <= self.a_max
    }

    pub fn width(&self) -> f64 {
        self.a_max - self.a_min
    }
}

/// A monotone transform applied to the model risk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Identity,
    Log,
}

impl Transform {
    pub fn apply(self, g_value: f64) -> Result<f64> {
        match self {
            Transform::Identity => Ok(g_value),
            Transform::Log => {
                if g_value > 0.0 {
                    Ok(g_value.ln())
                } else {
                    Err(Error::domain(format!(
                        "log transform of non-positive risk {g_value}"
                    )))
                }
            }
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Transform::Identity => "identity",
            Transform::Log => "log",
        }
    }
}

impl std::str::FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Transform::Identity),
            "log" => Ok(Transform::Log),
            other => Err(Error::domain(format!(
                "unknown transform `{other}` (expected identity or log)"
            ))),
        }
    }
}

/// Free-function form of [`Transform::apply`].
pub fn risk_transform(kind: Transform, g_value: f64) -> Result<f64> {
    kind.apply(g_value)
}

/// Model risk `G(a, θ)` used by the oracle and the variational fits.
///
/// `Constant` ignores both arguments; it is the injected risk used to check
/// that the calibration machinery collapses when the risk carries no
/// information about θ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModelRisk {
    Newsvendor(NewsvendorParams),
    Constant(f64),
}

impl ModelRisk {
    /// Evaluates `G(a, θ)` without argument checks. Callers guarantee θ > 0.
    #[inline]
    pub fn eval(&self, a: f64, theta: f64) -> f64 {
        match *self {
            ModelRisk::Newsvendor(p) => newsvendor_risk(a, theta, p),
            ModelRisk::Constant(c) => c,
        }
    }
}

#[inline]
fn newsvendor_risk(a: f64, theta: f64, p: NewsvendorParams) -> f64 {
    // ha + [b + (b+h)(e^{-aθ} - 1)]/θ, stable for small aθ
    p.h * a + (p.b + (p.b + p.h) * (-a * theta).exp_m1()) / theta
}

/// Newsvendor loss `h (a − ξ)⁺ + b (ξ − a)⁺`.
pub fn loss(a: f64, xi: f64, p: NewsvendorParams) -> Result<f64> {
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::domain(format!(
            "decision must be non-negative, got {a}"
        )));
    }
    if !(xi >= 0.0 && xi.is_finite()) {
        return Err(Error::domain(format!(
            "demand must be non-negative, got {xi}"
        )));
    }
    Ok(p.h * (a - xi).max(0.0) + p.b * (xi - a).max(0.0))
}

/// Closed-form expected loss under `Exp(θ)` demand.
pub fn model_risk(a: f64, theta: f64, p: NewsvendorParams) -> Result<f64> {
    ensure_positive("theta", theta)?;
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::domain(format!(
            "decision must be non-negative, got {a}"
        )));
    }
    Ok(newsvendor_risk(a, theta, p))
}

/// Unclamped stationary point of `G(·, θ)`.
pub fn stationary_decision(theta: f64, p: NewsvendorParams) -> f64 {
    p.log_ratio() / theta
}

/// `argmin_{a ∈ dom} G(a, θ₀)`.
pub fn true_optimal_decision(
    theta0: f64,
    p: NewsvendorParams,
    dom: DecisionInterval,
) -> Result<f64> {
    ensure_positive("theta0", theta0)?;
    p.validate()?;
    dom.validate()?;
    Ok(dom.clamp(stationary_decision(theta0, p)))
}

/// Curvature constants of the growth condition at the true optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthConstants {
    /// `∂²G/∂a²` at `(a₀*, θ₀)`, equal to `h θ₀`.
    pub c1: f64,
    /// `∂² ln G/∂a²` at `(a₀*, θ₀)`, equal to `θ₀ / a₀*`.
    pub c_log: f64,
}

/// Growth constants for the quadratic reading `Ψ(d) = C d²`.
///
/// Fails with [`Error::BoundaryOptimum`] when the stationary point is not
/// strictly inside `dom`, since the curvature then says nothing about growth
/// away from the constrained minimizer.
pub fn growth_constants(
    theta0: f64,
    p: NewsvendorParams,
    dom: DecisionInterval,
) -> Result<GrowthConstants> {
    ensure_positive("theta0", theta0)?;
    p.validate()?;
    dom.validate()?;
    let a_star = stationary_decision(theta0, p);
    if !(a_star > dom.a_min && a_star < dom.a_max) {
        return Err(Error::BoundaryOptimum {
            a_star,
            a_min: dom.a_min,
            a_max: dom.a_max,
        });
    }
    Ok(GrowthConstants {
        c1: p.h * theta0,
        c_log: theta0 / a_star,
    })
}

/// Stationary point `θ*` of `θ ↦ G(a, θ)`, the root of
/// `h − (b + h) e^{−aθ}(1 + aθ) = 0`, found by bisection.
pub fn critical_rate(a: f64, p: NewsvendorParams) -> Result<f64> {
    ensure_positive("decision a", a)?;
    p.validate()?;
    // with u = aθ the condition is (1+u)e^{-u} = h/(b+h), decreasing in u
    let target = p.h / (p.b + p.h);
    let cond = |u: f64| (1.0 + u) * (-u).exp() - target;
    let mut lo = 0.0;
    let mut hi = 1.0;
    while cond(hi) > 0.0 {
        hi *= 2.0;
    }
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if cond(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi) / a)
}

/// Lower bound `h a_min² θ*/(1 + a θ*)` on `G(a, ·)` with `θ* = θ*(a)`.
pub fn risk_lower_bound(a: f64, p: NewsvendorParams, dom: DecisionInterval) -> Result<f64> {
    let theta_star = critical_rate(a, p)?;
    Ok(p.h * dom.a_min * dom.a_min * theta_star / (1.0 + a * theta_star))
}

/// Lower bound on `G` valid over the whole decision interval: the
/// `risk_lower_bound` form evaluated with `a = a_max`, which is the form
/// `h a_min² θ*/(1 + a_max θ*)` and is below `inf_{a,θ} G(a, θ)`.
pub fn uniform_risk_lower_bound(p: NewsvendorParams, dom: DecisionInterval) -> Result<f64> {
    risk_lower_bound(dom.a_max, p, dom)
}
