//! Finite-sample optimality-gap bounds for the newsvendor instance.
//!
//! All bounds share the shell `[2τ √(M · rate) / C]^{1/δ}` where `rate` is
//! `ε_n² = 1/n` plus a variational term of order `ln n / n`. A bound holds
//! with probability at least `1 − 1/τ` (or `1 − 2/τ` for the combined
//! bound), so every evaluator returns the level alongside the value.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::special::ln_gamma;

/// Constants feeding the bound evaluators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    /// The existence constant `M`; not computable from the model, user-supplied.
    pub m: f64,
    pub tau: f64,
    pub delta: f64,
    pub c1_growth: f64,
    pub clog_growth: f64,
    pub c9: f64,
    pub c8: f64,
}

impl BoundConstants {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("M", self.m)?;
        if !(self.tau.is_finite() && self.tau > 1.0) {
            return Err(Error::Config(format!(
                "tau must exceed 1, got {}",
                self.tau
            )));
        }
        ensure_positive("delta", self.delta)?;
        ensure_positive("C1 growth constant", self.c1_growth)?;
        ensure_positive("Clog growth constant", self.clog_growth)?;
        ensure_positive("C9", self.c9)?;
        if !(self.c8.is_finite() && self.c8 >= 0.0) {
            return Err(Error::Config(format!(
                "C8 must be non-negative, got {}",
                self.c8
            )));
        }
        Ok(())
    }

    /// Probability level `1 − 1/τ` of a single decision or value bound.
    pub fn level(&self) -> f64 {
        1.0 - 1.0 / self.tau
    }

    /// Probability level `1 − 2/τ` of the combined bound.
    pub fn combined_level(&self) -> f64 {
        1.0 - 2.0 / self.tau
    }
}

/// A bound value and the probability with which it holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub value: f64,
    pub level: f64,
}

fn check_n(n: usize, min: usize) -> Result<f64> {
    if n < min {
        Err(Error::domain(format!(
            "sample size must be at least {min}, got {n}"
        )))
    } else {
        Ok(n as f64)
    }
}

/// Control sequence `ε_n² = 1/n`.
pub fn epsilon_sq(n: usize) -> Result<f64> {
    Ok(check_n(n, 1)?.recip())
}

/// Prior-mass constant for the inverse-gamma prior and exponential likelihood:
///
/// ```text
/// C₉ = 1/2 + max(0, 2 + 2β/θ₀ − ln √(2π) − ln(β^α/Γ(α)) + α ln θ₀)
/// ```
pub fn c9(alpha: f64, beta: f64, theta0: f64) -> Result<f64> {
    ensure_positive("alpha", alpha)?;
    ensure_positive("beta", beta)?;
    ensure_positive("theta0", theta0)?;
    let log_sqrt_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let log_norm = alpha * beta.ln() - ln_gamma(alpha)?;
    let inner = 2.0 + 2.0 * beta / theta0 - log_sqrt_2pi - log_norm + alpha * theta0.ln();
    let value = 0.5 + inner.max(0.0);
    if !(value > 0.0 && value.is_finite()) {
        return Err(Error::Config(format!("C9 = {value} is not positive")));
    }
    Ok(value)
}

/// `κ_n² ≤ C₉ ln n / n`.
pub fn kappa_sq(n: usize, c9: f64) -> Result<f64> {
    let n = check_n(n, 2)?;
    ensure_positive("C9", c9)?;
    Ok(c9 * n.ln() / n)
}

/// Bound on the loss-calibrated rate term: `C₉ ln n / n` when `C′₈ ≥ 0`,
/// otherwise `(C₉ − C′₈) ln n / n`.
pub fn eta_log_bound(n: usize, c9: f64, c8_prime: f64) -> Result<f64> {
    let base = kappa_sq(n, c9)?;
    if !c8_prime.is_finite() {
        return Err(Error::domain(format!("C8' must be finite, got {c8_prime}")));
    }
    if c8_prime >= 0.0 {
        Ok(base)
    } else {
        let n = n as f64;
        Ok((c9 - c8_prime) * n.ln() / n)
    }
}

fn shell(tau: f64, m: f64, rate_term: f64, growth: f64, delta: f64) -> f64 {
    (2.0 * tau * (m * rate_term).sqrt() / growth).powf(delta.recip())
}

/// Decision-gap bound `[2τ √(M · rate_term) / C]^{1/δ}` at level `1 − 1/τ`.
pub fn decision_gap_bound(
    n: usize,
    rate_term: f64,
    growth_c: f64,
    consts: &BoundConstants,
) -> Result<Bound> {
    check_n(n, 1)?;
    consts.validate()?;
    ensure_positive("rate term", rate_term)?;
    ensure_positive("growth constant", growth_c)?;
    Ok(Bound {
        value: shell(consts.tau, consts.m, rate_term, growth_c, consts.delta),
        level: consts.level(),
    })
}

/// Value-gap bound `√(M · rate_term)` at level `1 − 1/τ`.
pub fn value_gap_bound(n: usize, rate_term: f64, consts: &BoundConstants) -> Result<Bound> {
    check_n(n, 1)?;
    consts.validate()?;
    ensure_positive("rate term", rate_term)?;
    Ok(Bound {
        value: (consts.m * rate_term).sqrt(),
        level: consts.level(),
    })
}

/// Distance between the Bayes-posterior and risk-sensitive decisions:
/// `2[2τ√(M ε²)/C¹]^{1/δ} + 2[2τ√(M(ε² + η))/C^f]^{1/δ}` at level `1 − 2/τ`.
pub fn combined_gap_bound(
    n: usize,
    eta: f64,
    cf_growth: f64,
    consts: &BoundConstants,
) -> Result<Bound> {
    let eps = epsilon_sq(n)?;
    consts.validate()?;
    ensure_positive("growth constant", cf_growth)?;
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(Error::domain(format!(
            "eta must be non-negative, got {eta}"
        )));
    }
    let first = shell(consts.tau, consts.m, eps, consts.c1_growth, consts.delta);
    let second = shell(consts.tau, consts.m, eps + eta, cf_growth, consts.delta);
    Ok(Bound {
        value: 2.0 * first + 2.0 * second,
        level: consts.combined_level(),
    })
}
