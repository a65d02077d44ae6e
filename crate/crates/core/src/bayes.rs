//! Likelihood, priors, demand simulation and the exact-posterior oracle.
//!
//! Demand is i.i.d. `Exp(θ)`. The default prior on the rate is inverse-gamma,
//! which is not conjugate; a gamma prior is also available so that the
//! oracle and the variational fits can be checked against closed forms.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::newsvendor::{DecisionInterval, ModelRisk, Transform};
use crate::optim::golden_section;
use crate::special::{ln_gamma, log_legendre_grid, QuadratureGrid};

/// Inverse-gamma prior with shape `alpha` and rate `beta`:
/// `π(θ) = β^α/Γ(α) θ^{−α−1} e^{−β/θ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseGammaPrior {
    pub alpha: f64,
    pub beta: f64,
}

/// Gamma prior with shape `alpha` and rate `beta`, conjugate to the
/// exponential likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Prior {
    InverseGamma(InverseGammaPrior),
    Gamma(GammaPrior),
}

impl Prior {
    pub fn inverse_gamma(alpha: f64, beta: f64) -> Result<Self> {
        let p = Prior::InverseGamma(InverseGammaPrior { alpha, beta });
        p.validate()?;
        Ok(p)
    }

    pub fn gamma(alpha: f64, beta: f64) -> Result<Self> {
        let p = Prior::Gamma(GammaPrior { alpha, beta });
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.shape_rate();
        ensure_positive("prior shape", a)?;
        ensure_positive("prior rate", b)
    }

    pub fn shape_rate(&self) -> (f64, f64) {
        match *self {
            Prior::InverseGamma(p) => (p.alpha, p.beta),
            Prior::Gamma(p) => (p.alpha, p.beta),
        }
    }

    /// `α ln β − ln Γ(α)`, the log normalizing constant shared by both families.
    pub(crate) fn log_norm(&self) -> f64 {
        let (a, b) = self.shape_rate();
        a * b.ln() - ln_gamma(a).expect("validated prior shape")
    }

    #[inline]
    fn log_density_unchecked(&self, theta: f64) -> f64 {
        match *self {
            Prior::InverseGamma(p) => {
                self.log_norm() - (p.alpha + 1.0) * theta.ln() - p.beta / theta
            }
            Prior::Gamma(p) => self.log_norm() + (p.alpha - 1.0) * theta.ln() - p.beta * theta,
        }
    }

    fn d_log_density(&self, theta: f64) -> f64 {
        match *self {
            Prior::InverseGamma(p) => -(p.alpha + 1.0) / theta + p.beta / (theta * theta),
            Prior::Gamma(p) => (p.alpha - 1.0) / theta - p.beta,
        }
    }

    fn d2_log_density(&self, theta: f64) -> f64 {
        match *self {
            Prior::InverseGamma(p) => {
                (p.alpha + 1.0) / (theta * theta) - 2.0 * p.beta / (theta * theta * theta)
            }
            Prior::Gamma(p) => -(p.alpha - 1.0) / (theta * theta),
        }
    }
}

/// I.i.d. demand observations together with their sufficient statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandDataset {
    samples: Vec<f64>,
    sum: f64,
}

impl DemandDataset {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if let Some((i, x)) = samples
            .iter()
            .enumerate()
            .find(|(_, x)| !(x.is_finite() && **x >= 0.0))
        {
            return Err(Error::domain(format!(
                "demand sample {i} must be finite and non-negative, got {x}"
            )));
        }
        let sum = samples.iter().sum();
        Ok(DemandDataset { samples, sum })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn sum(&self) -> f64 {
        self.sum
    }

    pub fn mle(&self) -> f64 {
        self.n() as f64 / self.sum
    }

    /// Writes one value per row under the header `xi`.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["xi"])?;
        for x in &self.samples {
            w.write_record([x.to_string()])?;
        }
        w.flush()
    }

    /// Parses the format produced by [`write_csv`](Self::write_csv).
    /// Errors name the offending line.
    pub fn read_csv<R: Read>(input: R, source: &Path) -> Result<Self> {
        let parse_err = |message: String| Error::Parse {
            path: source.to_path_buf(),
            message,
        };
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(input);
        let headers = r.headers().map_err(|e| parse_err(e.to_string()))?.clone();
        if headers.len() != 1 || &headers[0] != "xi" {
            return Err(parse_err(format!(
                "line 1: expected header `xi`, found `{}`",
                headers.as_slice()
            )));
        }
        let mut samples = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| parse_err(e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != 1 {
                return Err(parse_err(format!(
                    "line {line}: expected 1 field, found {}",
                    rec.len()
                )));
            }
            let x: f64 = rec[0]
                .parse()
                .map_err(|_| parse_err(format!("line {line}: `{}` is not a number", &rec[0])))?;
            if !(x.is_finite() && x >= 0.0) {
                return Err(parse_err(format!(
                    "line {line}: demand must be non-negative, got {x}"
                )));
            }
            samples.push(x);
        }
        if samples.is_empty() {
            return Err(parse_err("no observations".into()));
        }
        DemandDataset::new(samples)
    }
}

/// SplitMix64 finalizer, used to mix seed material.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a stream seed from a base seed and a sequence of indices.
/// The result depends only on the inputs, never on evaluation order.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(mix64(base), |acc, &p| mix64(acc ^ mix64(p)))
}

/// Draws `n` exponential demands by inverse CDF from a SplitMix64 stream.
pub fn sample_demand(theta0: f64, n: usize, seed: u64) -> Result<DemandDataset> {
    ensure_positive("theta0", theta0)?;
    if n == 0 {
        return Err(Error::domain("sample size n must be at least 1"));
    }
    let mut rng = SplitMix64::seed_from_u64(seed);
    let samples = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            -(-u).ln_1p() / theta0
        })
        .collect();
    DemandDataset::new(samples)
}

/// `n ln θ − θ Σξ`.
pub fn log_likelihood(theta: f64, data: &DemandDataset) -> Result<f64> {
    ensure_positive("theta", theta)?;
    Ok(data.n() as f64 * theta.ln() - theta * data.sum())
}

pub fn log_prior(theta: f64, prior: &Prior) -> Result<f64> {
    ensure_positive("theta", theta)?;
    Ok(prior.log_density_unchecked(theta))
}

pub fn log_joint(theta: f64, data: &DemandDataset, prior: &Prior) -> Result<f64> {
    Ok(log_likelihood(theta, data)? + log_prior(theta, prior)?)
}

#[inline]
fn log_joint_unchecked(theta: f64, n: f64, sum: f64, prior: &Prior) -> f64 {
    n * theta.ln() - theta * sum + prior.log_density_unchecked(theta)
}

/// Mode and curvature (negative second derivative) of the log joint.
pub fn joint_mode(data: &DemandDataset, prior: &Prior) -> Result<(f64, f64)> {
    prior.validate()?;
    if data.n() == 0 {
        return Err(Error::domain("dataset is empty"));
    }
    let n = data.n() as f64;
    let sum = data.sum();
    let slope = |t: f64| n / t - sum + prior.d_log_density(t);
    // bracket the sign change of the derivative
    let mut lo = (n / sum.max(f64::MIN_POSITIVE)).min(1.0);
    let mut hi = lo;
    let mut guard = 0;
    while slope(lo) <= 0.0 {
        lo *= 0.5;
        guard += 1;
        if guard > 2000 {
            return Err(Error::domain("log joint has no interior mode"));
        }
    }
    guard = 0;
    while slope(hi) >= 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 2000 {
            return Err(Error::domain(
                "log joint increases without bound; posterior is improper",
            ));
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let mode = 0.5 * (lo + hi);
    let curvature = n / (mode * mode) - prior.d2_log_density(mode);
    if !(curvature > 0.0 && curvature.is_finite()) {
        return Err(Error::domain(format!(
            "log joint is not curved at its mode ({curvature})"
        )));
    }
    Ok((mode, curvature))
}

const LAPLACE_WIDTH: f64 = 14.0;
const GRID_FLOOR: f64 = 1e-12;
const TAIL_MASS_TOL: f64 = 1e-10;
const MAX_WIDENINGS: usize = 3;

/// Exact posterior by quadrature on a truncated θ-grid.
///
/// Immutable after construction, so it can be shared across threads.
#[derive(Debug, Clone)]
pub struct PosteriorOracle {
    grid: QuadratureGrid,
    /// Quadrature weight times posterior density at each node.
    mass: Vec<f64>,
    log_evidence: f64,
    prior: Prior,
    data: DemandDataset,
}

/// Mode and curvature of the posterior density of `u = ln θ`, i.e. of
/// `ℓ(e^u) + u` where `ℓ` is the log joint.
fn log_scale_mode(data: &DemandDataset, prior: &Prior) -> Result<(f64, f64)> {
    let n = data.n() as f64;
    let sum = data.sum();
    // d/du = θ ℓ'(θ) + 1
    let slope = |u: f64| {
        let t = u.exp();
        n + 1.0 - t * sum + t * prior.d_log_density(t)
    };
    let (theta_mode, _) = joint_mode(data, prior)?;
    let mut lo = theta_mode.ln();
    let mut hi = lo;
    let mut guard = 0;
    while slope(lo) <= 0.0 {
        lo -= 1.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::domain("posterior of ln(theta) has no interior mode"));
        }
    }
    guard = 0;
    while slope(hi) >= 0.0 {
        hi += 1.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::domain("posterior of ln(theta) has no interior mode"));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.abs().max(1.0) {
            break;
        }
    }
    let u = 0.5 * (lo + hi);
    let t = u.exp();
    // d²/du² = θ ℓ'(θ) + θ² ℓ''(θ)
    let d1 = n / t - sum + prior.d_log_density(t);
    let d2 = -n / (t * t) + prior.d2_log_density(t);
    let curvature = -(t * d1 + t * t * d2);
    if !(curvature > 0.0 && curvature.is_finite()) {
        return Err(Error::domain(format!(
            "posterior is not curved at its mode ({curvature})"
        )));
    }
    Ok((u, curvature))
}

/// Builds the posterior oracle with `quad_order ≥ 64` nodes.
///
/// The grid is laid out in `ln θ` around the Laplace approximation of the
/// log-scale posterior, ±14 standard deviations wide with θ floored at
/// 1e-12. If the mass just outside the grid exceeds 1e-10 of the total, the
/// width is doubled, up to three times.
pub fn build_posterior_oracle(
    data: &DemandDataset,
    prior: &Prior,
    quad_order: usize,
) -> Result<PosteriorOracle> {
    if quad_order < 64 {
        return Err(Error::domain(format!(
            "posterior quadrature order must be >= 64, got {quad_order}"
        )));
    }
    let (mode, curvature) = log_scale_mode(data, prior)?;
    let sd = curvature.sqrt().recip();
    let n = data.n() as f64;
    let sum = data.sum();
    let lj = |t: f64| log_joint_unchecked(t, n, sum, prior);
    let shift = lj(mode.exp()) + mode;
    let floor = GRID_FLOOR.ln();

    let mut width = LAPLACE_WIDTH;
    let mut tail_mass = f64::NAN;
    for _ in 0..=MAX_WIDENINGS {
        let lo = (mode - width * sd).max(floor);
        let hi = mode + width * sd;
        let grid = log_legendre_grid(quad_order, lo, hi)?;
        let density = |t: f64| (lj(t) - shift).exp();
        let body = grid.integrate(density)?;

        let span = hi - lo;
        let right = log_legendre_grid(64, hi, hi + span)?.integrate(density)?;
        let left = if lo > floor {
            log_legendre_grid(64, (lo - span).max(floor), lo)?.integrate(density)?
        } else {
            0.0
        };
        tail_mass = (left + right) / body;
        if tail_mass <= TAIL_MASS_TOL {
            let log_evidence = shift + body.ln();
            let mass = grid
                .nodes()
                .iter()
                .zip(grid.weights())
                .map(|(&t, &w)| w * (lj(t) - log_evidence).exp())
                .collect();
            return Ok(PosteriorOracle {
                grid,
                mass,
                log_evidence,
                prior: *prior,
                data: data.clone(),
            });
        }
        width *= 2.0;
    }
    Err(Error::Coverage {
        attempts: MAX_WIDENINGS,
        tail_mass,
    })
}

impl PosteriorOracle {
    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn log_evidence(&self) -> f64 {
        self.log_evidence
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn data(&self) -> &DemandDataset {
        &self.data
    }

    /// Posterior density at `theta`.
    pub fn density(&self, theta: f64) -> Result<f64> {
        Ok((log_joint(theta, &self.data, &self.prior)? - self.log_evidence).exp())
    }

    /// Posterior expectation of `f(θ)`.
    pub fn expect<F: FnMut(f64) -> f64>(&self, mut f: F) -> Result<f64> {
        let mut total = 0.0;
        for (&t, &m) in self.grid.nodes().iter().zip(&self.mass) {
            let v = f(t);
            if !v.is_finite() {
                return Err(Error::Evaluation { node: t, value: v });
            }
            total += m * v;
        }
        Ok(total)
    }

    pub fn mean(&self) -> f64 {
        self.expect(|t| t).expect("grid nodes are finite")
    }

    /// `E_{π_n}[G(a, θ)]`.
    pub fn posterior_risk(&self, a: f64, risk: &ModelRisk) -> Result<f64> {
        self.expect(|t| risk.eval(a, t))
    }

    /// Minimizer of the posterior risk over `dom`.
    pub fn bayes_decision(&self, risk: &ModelRisk, dom: &DecisionInterval) -> Result<f64> {
        dom.validate()?;
        golden_section(|a| self.posterior_risk(a, risk), dom.a_min, dom.a_max, 1e-8)
    }

    /// `(1/γ̄′) ln E_{π_n}[exp(γ̄′ R(a, θ))]` with `R = F∘G`.
    pub fn logexp_risk(
        &self,
        a: f64,
        gamma_bar: f64,
        risk: &ModelRisk,
        outer: Transform,
    ) -> Result<f64> {
        ensure_positive("gamma_bar", gamma_bar)?;
        let mut values = Vec::with_capacity(self.mass.len());
        for &t in self.grid.nodes() {
            let r = outer.apply(risk.eval(a, t))?;
            if !r.is_finite() {
                return Err(Error::Evaluation { node: t, value: r });
            }
            values.push(gamma_bar * r);
        }
        let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let acc: f64 = values
            .iter()
            .zip(&self.mass)
            .map(|(v, m)| m * (v - top).exp())
            .sum();
        Ok((top + acc.ln()) / gamma_bar)
    }

    /// Size-biased risk `E[G²]/E[G]` under the posterior.
    pub fn size_biased_risk(&self, a: f64, risk: &ModelRisk) -> Result<f64> {
        let first = self.posterior_risk(a, risk)?;
        if first == 0.0 {
            return Err(Error::domain(
                "size-biased risk undefined: posterior risk is zero",
            ));
        }
        let second = self.expect(|t| risk.eval(a, t).powi(2))?;
        Ok(second / first)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::newsvendor::NewsvendorParams;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn ig(alpha: f64, beta: f64) -> Prior {
        Prior::inverse_gamma(alpha, beta).unwrap()
    }

    fn data(xs: &[f64]) -> DemandDataset {
        DemandDataset::new(xs.to_vec()).unwrap()
    }

    // conjugate closed form for the gamma prior
    fn conjugate_log_evidence(a0: f64, b0: f64, d: &DemandDataset) -> f64 {
        let n = d.n() as f64;
        a0 * b0.ln() + ln_gamma(a0 + n).unwrap()
            - ln_gamma(a0).unwrap()
            - (a0 + n) * (b0 + d.sum()).ln()
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_demand(0.68, 50, 7).unwrap();
        let b = sample_demand(0.68, 50, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_demand(0.68, 50, 8).unwrap());
        assert!(sample_demand(0.68, 0, 7).is_err());
        assert!(sample_demand(0.0, 5, 7).is_err());
    }

    #[test]
    fn sampling_moments() {
        let n = 1_000_000;
        let d = sample_demand(0.68, n, 1).unwrap();
        let mean = d.sum() / n as f64;
        assert!((mean - 1.0 / 0.68).abs() < 4.0 * (1.0 / 0.68) / (n as f64).sqrt());

        let d = sample_demand(2.0, n, 2).unwrap();
        let mean = d.sum() / n as f64;
        let var = d.samples().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        // Var of the sample variance for Exp(θ): (μ4 − σ⁴)/n = (9/θ⁴ − 1/θ⁴)/n
        let se = (8.0 / 16.0 / n as f64).sqrt();
        assert!((var - 0.25).abs() < 4.0 * se, "{var}");
    }

    #[test]
    fn dataset_invariants() {
        let d = data(&[1.0, 2.5, 0.0]);
        assert_eq!(d.n(), 3);
        assert_eq!(d.sum(), 3.5);
        assert!(DemandDataset::new(vec![1.0, -0.1]).is_err());
        assert!(DemandDataset::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let d = sample_demand(1.3, 20, 3).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"xi\n"));
        let back = DemandDataset::read_csv(&buf[..], Path::new("mem")).unwrap();
        assert_eq!(back, d);

        let bad = b"xi\n1.0\n2.0\nnope\n";
        let err = DemandDataset::read_csv(&bad[..], Path::new("mem"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 4"), "{err}");
        let bad = b"x\n1.0\n";
        assert!(DemandDataset::read_csv(&bad[..], Path::new("mem")).is_err());
    }

    #[test]
    fn likelihood_and_prior_examples() {
        assert_abs_diff_eq!(log_likelihood(1.0, &data(&[1.0, 1.0])).unwrap(), -2.0);
        assert_abs_diff_eq!(
            log_likelihood(2.0, &data(&[0.5])).unwrap(),
            2f64.ln() - 1.0,
            epsilon = 1e-15
        );
        assert!(log_likelihood(0.0, &data(&[1.0])).is_err());
        let d = data(&[0.3, 1.9, 0.7, 2.2]);
        let mle = d.mle();
        let at = |t: f64| log_likelihood(t, &d).unwrap();
        assert!(at(mle) > at(mle * 1.001) && at(mle) > at(mle * 0.999));

        assert_abs_diff_eq!(
            log_prior(1.0, &ig(1.0, 1.0)).unwrap(),
            -1.0,
            epsilon = 1e-15
        );
        assert!(log_prior(-1.0, &ig(1.0, 1.0)).is_err());

        let p = ig(2.5, 3.0);
        let g = log_legendre_grid(512, -20.0, 20.0).unwrap();
        let mass = g.integrate(|t| log_prior(t, &p).unwrap().exp()).unwrap();
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-6);
        let mode = (0..200_000)
            .map(|i| 1e-3 + i as f64 * 1e-5)
            .fold((0.0, f64::NEG_INFINITY), |acc, t| {
                let v = log_prior(t, &p).unwrap();
                if v > acc.1 {
                    (t, v)
                } else {
                    acc
                }
            })
            .0;
        assert!((mode - 3.0 / 3.5).abs() < 2e-5);
    }

    #[test]
    fn log_joint_examples() {
        let d = data(&[1.0, 1.0]);
        let p = ig(1.0, 1.0);
        assert_abs_diff_eq!(log_joint(1.0, &d, &p).unwrap(), -3.0, epsilon = 1e-15);
        let t = 0.8;
        assert_eq!(
            log_joint(t, &d, &p).unwrap(),
            log_likelihood(t, &d).unwrap() + log_prior(t, &p).unwrap()
        );
        let d2 = data(&[1.0, 1.0, 0.4]);
        let diff = log_joint(t, &d2, &p).unwrap() - log_joint(t, &d, &p).unwrap();
        assert_abs_diff_eq!(diff, t.ln() - t * 0.4, epsilon = 1e-12);
    }

    #[test]
    fn conjugate_evidence_and_mean() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(9);
        for i in 0..10 {
            let a0 = rng.random_range(0.5..5.0);
            let b0 = rng.random_range(0.2..6.0);
            let n = [5, 50, 500][i % 3];
            let d = sample_demand(rng.random_range(0.3..3.0), n, i as u64).unwrap();
            let o = build_posterior_oracle(&d, &Prior::gamma(a0, b0).unwrap(), 256).unwrap();
            let exact = conjugate_log_evidence(a0, b0, &d);
            assert!(
                ((o.log_evidence() - exact) / exact).abs() < 1e-8,
                "{} vs {exact}",
                o.log_evidence()
            );
            let mean = (a0 + n as f64) / (b0 + d.sum());
            assert!(
                (o.mean() - mean).abs() < 1e-8 * mean,
                "{} vs {mean}",
                o.mean()
            );
        }
    }

    #[test]
    fn posterior_normalizes_and_shrinks() {
        let p = ig(1.0, 4.1);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(10);
        for i in 0..20 {
            let n = rng.random_range(20..200);
            let d = sample_demand(rng.random_range(0.3..1.0), n, 50 + i).unwrap();
            let o = build_posterior_oracle(&d, &p, 256).unwrap();
            let total = o
                .grid()
                .nodes()
                .iter()
                .zip(o.grid().weights())
                .map(|(&t, &w)| w * o.density(t).unwrap())
                .sum::<f64>();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-6);
            // prior mode β/(α+1) and the MLE bracket the posterior mean
            let (lo, hi) = {
                let pm: f64 = 4.1 / 2.0;
                let mle = d.mle();
                (pm.min(mle), pm.max(mle))
            };
            assert!(
                o.mean() >= lo && o.mean() <= hi,
                "mean {} not in [{lo}, {hi}]",
                o.mean()
            );
        }
    }

    #[test]
    fn evidence_stable_under_refinement() {
        let p = ig(1.0, 4.1);
        for i in 0..20 {
            let d = sample_demand(0.68, [1, 3, 10, 100, 2000][i % 5], 200 + i as u64).unwrap();
            let e: Vec<f64> = [64, 128, 256]
                .iter()
                .map(|&k| build_posterior_oracle(&d, &p, k).unwrap().log_evidence())
                .collect();
            assert!(
                (e[0] - e[1]).abs() < 1e-6 && (e[1] - e[2]).abs() < 1e-6,
                "{e:?}"
            );
        }
    }

    #[test]
    fn oracle_rejects_low_order() {
        let d = data(&[1.0]);
        assert!(build_posterior_oracle(&d, &ig(1.0, 1.0), 32).is_err());
    }

    #[test]
    fn risk_functionals() {
        let d = sample_demand(0.68, 30, 4).unwrap();
        let o = build_posterior_oracle(&d, &ig(1.0, 4.1), 256).unwrap();
        let c = ModelRisk::Constant(2.75);
        assert_abs_diff_eq!(o.posterior_risk(1.0, &c).unwrap(), 2.75, epsilon = 1e-12);
        assert_abs_diff_eq!(
            o.logexp_risk(1.0, 3.0, &c, Transform::Identity).unwrap(),
            2.75,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(o.size_biased_risk(1.0, &c).unwrap(), 2.75, epsilon = 1e-12);

        let g = ModelRisk::Newsvendor(NewsvendorParams::new(0.005, 0.1).unwrap());
        for &a in &[0.5, 3.0, 10.0] {
            let pr = o.posterior_risk(a, &g).unwrap();
            let small = o.logexp_risk(a, 1e-6, &g, Transform::Identity).unwrap();
            assert!((small - pr).abs() < 1e-4, "{small} vs {pr}");
            let mut prev = f64::NEG_INFINITY;
            for k in 0..20 {
                let v = o
                    .logexp_risk(a, 0.1 * (k + 1) as f64, &g, Transform::Identity)
                    .unwrap();
                assert!(v >= prev - 1e-12);
                prev = v;
            }
            let sb = o.size_biased_risk(a, &g).unwrap();
            assert!(sb >= pr);
            let var = o.expect(|t| (g.eval(a, t) - pr).powi(2)).unwrap();
            assert!((sb - (pr + var / pr)).abs() < 1e-9 * sb.max(1.0));
        }
        assert!(o.logexp_risk(1.0, 0.0, &g, Transform::Identity).is_err());
    }

    #[test]
    fn bayes_decision_behaviour() {
        let dom = DecisionInterval::new(0.001, 75.0).unwrap();
        let p = NewsvendorParams::new(0.3, 0.3).unwrap();
        let g = ModelRisk::Newsvendor(p);
        let d = sample_demand(1.2, 15, 5).unwrap();
        let o = build_posterior_oracle(&d, &ig(1.0, 4.1), 256).unwrap();
        let a = o.bayes_decision(&g, &dom).unwrap();
        assert!(dom.contains(a));
        let grid_best = (0..10_000)
            .map(|i| 0.001 + 20.0 * i as f64 / 9_999.0)
            .map(|x| (x, o.posterior_risk(x, &g).unwrap()))
            .fold(
                (0.0, f64::INFINITY),
                |acc, v| if v.1 < acc.1 { v } else { acc },
            )
            .0;
        assert!((a - grid_best).abs() <= 20.0 / 9_999.0);

        // concentrated posterior recovers the plug-in optimum
        let big = sample_demand(1.2, 200_000, 6).unwrap();
        let o = build_posterior_oracle(&big, &ig(1.0, 4.1), 256).unwrap();
        let a = o.bayes_decision(&g, &dom).unwrap();
        let plug_in = crate::newsvendor::true_optimal_decision(o.mean(), p, dom).unwrap();
        assert!((a - plug_in).abs() < 1e-3, "{a} vs {plug_in}");
    }
}
