//! Special functions and Gauss–Legendre quadrature.
//!
//! Everything here is pure; the quadrature grid is an immutable value that
//! can be shared between threads.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

// ln(sqrt(2 pi))
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

fn check_arg(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "{name} requires a positive finite argument, got {x}"
        )))
    }
}

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    check_arg("ln_gamma", x)?;
    Ok(ln_gamma_unchecked(x))
}

fn ln_gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        // reflection: Γ(x)Γ(1-x) = π / sin(πx)
        return (PI / (PI * x).sin()).ln() - ln_gamma_unchecked(1.0 - x);
    }
    let x = x - 1.0;
    let mut series = LANCZOS_COEFFS[0];
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        series += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    LN_SQRT_2PI + (x + 0.5) * t.ln() - t + series.ln()
}

const ASYMPTOTIC_FROM: f64 = 10.0;

/// Digamma function ψ(x) = d/dx ln Γ(x).
pub fn digamma(x: f64) -> Result<f64> {
    check_arg("digamma", x)?;
    let mut x = x;
    let mut acc = 0.0;
    while x < ASYMPTOTIC_FROM {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let z = 1.0 / (x * x);
    let tail = z
        * (1.0 / 12.0
            - z * (1.0 / 120.0
                - z * (1.0 / 252.0
                    - z * (1.0 / 240.0 - z * (1.0 / 132.0 - z * 691.0 / 32_760.0)))));
    Ok(acc + x.ln() - 0.5 / x - tail)
}

/// Trigamma function ψ'(x).
pub fn trigamma(x: f64) -> Result<f64> {
    check_arg("trigamma", x)?;
    let mut x = x;
    let mut acc = 0.0;
    while x < ASYMPTOTIC_FROM {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let z = 1.0 / (x * x);
    let tail = (1.0 / x)
        * z
        * (1.0 / 6.0
            - z * (1.0 / 30.0
                - z * (1.0 / 42.0 - z * (1.0 / 30.0 - z * (5.0 / 66.0 - z * 691.0 / 2730.0)))));
    Ok(acc + 1.0 / x + 0.5 * z + tail)
}

/// Quadrature nodes and weights on a positive interval.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureGrid {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Σ wᵢ f(xᵢ). Fails on the first node where `f` is not finite.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> Result<f64> {
        let mut total = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            let v = f(x);
            if !v.is_finite() {
                return Err(Error::Evaluation { node: x, value: v });
            }
            total += w * v;
        }
        Ok(total)
    }
}

/// Free-function form of [`QuadratureGrid::integrate`].
pub fn integrate<F: FnMut(f64) -> f64>(f: F, grid: &QuadratureGrid) -> Result<f64> {
    grid.integrate(f)
}

/// Nodes above this order are split into composite panels.
const MAX_SINGLE_PANEL: usize = 64;
const COMPOSITE_PANELS: usize = 16;

/// Gauss–Legendre grid of `order` total nodes on `[lo, hi]`.
///
/// Orders up to 64 use a single panel and integrate polynomials of degree
/// `2·order − 1` exactly. Larger orders split the interval into 16 equal
/// panels carrying `ceil(order / 16)` nodes each.
pub fn legendre_grid(order: usize, lo: f64, hi: f64) -> Result<QuadratureGrid> {
    if order < 2 {
        return Err(Error::domain(format!(
            "quadrature order must be >= 2, got {order}"
        )));
    }
    if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi) {
        return Err(Error::domain(format!(
            "invalid quadrature interval [{lo}, {hi}]"
        )));
    }
    Ok(raw_legendre(order, lo, hi))
}

/// Gauss–Legendre rule in `u = ln θ` on `[u_lo, u_hi]`, mapped back to θ.
///
/// Nodes are `e^{uᵢ}` and weights `wᵢ e^{uᵢ}`, so the grid integrates
/// `f(θ) dθ` while resolving skewed or near-zero mass evenly in log scale.
pub fn log_legendre_grid(order: usize, u_lo: f64, u_hi: f64) -> Result<QuadratureGrid> {
    if order < 2 {
        return Err(Error::domain(format!(
            "quadrature order must be >= 2, got {order}"
        )));
    }
    if !(u_lo.is_finite() && u_hi.is_finite() && u_lo < u_hi) {
        return Err(Error::domain(format!(
            "invalid log-scale interval [{u_lo}, {u_hi}]"
        )));
    }
    let mut grid = raw_legendre(order, u_lo, u_hi);
    for (x, w) in grid.nodes.iter_mut().zip(grid.weights.iter_mut()) {
        *x = x.exp();
        *w *= *x;
    }
    Ok(grid)
}

fn raw_legendre(order: usize, lo: f64, hi: f64) -> QuadratureGrid {
    if order <= MAX_SINGLE_PANEL {
        let (x, w) = legendre_reference(order);
        let mut grid = QuadratureGrid {
            nodes: Vec::with_capacity(order),
            weights: Vec::with_capacity(order),
        };
        push_panel(&mut grid, &x, &w, lo, hi);
        return grid;
    }
    let per_panel = order.div_ceil(COMPOSITE_PANELS).max(2);
    let (x, w) = legendre_reference(per_panel);
    let width = (hi - lo) / COMPOSITE_PANELS as f64;
    let mut grid = QuadratureGrid {
        nodes: Vec::with_capacity(per_panel * COMPOSITE_PANELS),
        weights: Vec::with_capacity(per_panel * COMPOSITE_PANELS),
    };
    for k in 0..COMPOSITE_PANELS {
        let a = lo + width * k as f64;
        let b = if k + 1 == COMPOSITE_PANELS {
            hi
        } else {
            lo + width * (k + 1) as f64
        };
        push_panel(&mut grid, &x, &w, a, b);
    }
    grid
}

fn push_panel(grid: &mut QuadratureGrid, x: &[f64], w: &[f64], lo: f64, hi: f64) {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    for (&xi, &wi) in x.iter().zip(w) {
        grid.nodes.push(mid + half * xi);
        grid.weights.push(half * wi);
    }
}

/// Nodes (ascending) and weights on [-1, 1] by Newton iteration on P_n.
fn legendre_reference(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_eval(n, z);
            dp = d;
            let step = p / d;
            z -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_eval(n, z);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// P_n(z) and P_n'(z) by the three-term recurrence.
fn legendre_eval(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    (p1, n * (z * p1 - p0) / (z * z - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    // ψ(x) = -γ + Σ_{k≥0} [1/(k+1) - 1/(k+x)], summed far enough that the
    // remainder (≈ (x-1)/K) is below tolerance, with the tail added by its
    // leading-order integral.
    fn digamma_series(x: f64) -> f64 {
        let terms = 2_000_000usize;
        let mut s = 0.0;
        for k in (0..terms).rev() {
            let k = k as f64;
            s += 1.0 / (k + 1.0) - 1.0 / (k + x);
        }
        let big_k = terms as f64;
        // Σ_{k≥K} (x-1)/((k+1)(k+x)) ≈ (x-1)/(K + x/2)
        s + (x - 1.0) / (big_k + 0.5 * x) - EULER_GAMMA
    }

    #[test]
    fn ln_gamma_known_values() {
        assert_abs_diff_eq!(ln_gamma(1.0).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ln_gamma(2.0).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ln_gamma(5.0).unwrap(), 24f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            ln_gamma(0.5).unwrap(),
            0.572_364_942_924_700_1,
            epsilon = 1e-12
        );
        // Γ(1e-6) ≈ 1/x - γ
        let tiny = 1e-6;
        assert_abs_diff_eq!(
            ln_gamma(tiny).unwrap(),
            (1.0 / tiny - EULER_GAMMA).ln(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn ln_gamma_large_argument_matches_stirling() {
        for &x in &[1e3, 1e4, 1e6] {
            let stirling = (x - 0.5) * f64::ln(x) - x + LN_SQRT_2PI + 1.0 / (12.0 * x)
                - 1.0 / (360.0 * x * x * x);
            let got = ln_gamma(x).unwrap();
            assert!(
                ((got - stirling) / stirling).abs() < 1e-14,
                "x={x}: {got} vs {stirling}"
            );
        }
    }

    #[test]
    fn domain_errors() {
        for bad in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(ln_gamma(bad).is_err());
            assert!(digamma(bad).is_err());
            assert!(trigamma(bad).is_err());
        }
    }

    #[test]
    fn digamma_against_series() {
        let psi1 = digamma_series(1.0);
        assert_abs_diff_eq!(psi1, -EULER_GAMMA, epsilon = 1e-12);
        assert_abs_diff_eq!(digamma(1.0).unwrap(), psi1, epsilon = 1e-10);
        assert_abs_diff_eq!(digamma(2.0).unwrap(), psi1 + 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(
            digamma(2.0).unwrap(),
            0.422_784_335_098_467_1,
            epsilon = 1e-10
        );
        for &x in &[0.3, 3.7, 12.5] {
            assert_abs_diff_eq!(digamma(x).unwrap(), digamma_series(x), epsilon = 1e-8);
        }
    }

    #[test]
    fn digamma_small_and_large() {
        // ψ(x) ≈ -1/x - γ + (π²/6)x near zero
        let x = 1e-4;
        let approx = -1.0 / x - EULER_GAMMA + PI * PI / 6.0 * x;
        assert_abs_diff_eq!(digamma(x).unwrap(), approx, epsilon = 1e-7);
        let x: f64 = 1e6;
        let asym = x.ln() - 0.5 / x - 1.0 / (12.0 * x * x);
        assert_abs_diff_eq!(digamma(x).unwrap(), asym, epsilon = 1e-12);
    }

    #[test]
    fn trigamma_values() {
        let zeta2: f64 = (1..2_000_000u64)
            .map(|k| 1.0 / (k as f64 * k as f64))
            .sum::<f64>()
            + 1.0 / 2_000_000.0;
        assert_abs_diff_eq!(trigamma(1.0).unwrap(), zeta2, epsilon = 1e-8);
        assert_abs_diff_eq!(trigamma(1.0).unwrap(), PI * PI / 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(trigamma(2.0).unwrap(), PI * PI / 6.0 - 1.0, epsilon = 1e-12);
        let grid: Vec<f64> = (1..400).map(|i| 0.01 * f64::powf(1.03, i as f64)).collect();
        for w in grid.windows(2) {
            assert!(trigamma(w[1]).unwrap() < trigamma(w[0]).unwrap());
        }
    }

    #[test]
    fn quadrature_examples() {
        let g = legendre_grid(8, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(g.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(integrate(|_| 1.0, &g).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(integrate(|x| x, &g).unwrap(), 0.5, epsilon = 1e-14);
        assert_eq!(integrate(|_| 0.0, &g).unwrap(), 0.0);

        let g = legendre_grid(4, 0.0, 2.0).unwrap();
        assert_abs_diff_eq!(g.integrate(|x| x * x * x).unwrap(), 4.0, epsilon = 1e-12);

        let g = legendre_grid(256, 0.0, 50.0).unwrap();
        assert_eq!(g.len(), 256);
        assert_abs_diff_eq!(
            g.integrate(|x| (-x).exp()).unwrap(),
            1.0 - (-50f64).exp(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn gamma_density_normalizes() {
        // Gamma(shape 3, rate 2) truncated to [0, 40]; the lost tail is < 1e-30.
        let g = legendre_grid(256, 0.0, 40.0).unwrap();
        let ln_norm = 3.0 * 2f64.ln() - ln_gamma(3.0).unwrap();
        let mass = g
            .integrate(|x| (ln_norm + 2.0 * x.ln() - 2.0 * x).exp())
            .unwrap();
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn log_grid_integrates_in_theta() {
        let g = log_legendre_grid(256, (1e-8f64).ln(), 60f64.ln()).unwrap();
        assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
        assert!(g.nodes()[0] > 0.0);
        // ∫ θ^{-1/2} e^{-θ} dθ = √π, singular at zero
        let got = g.integrate(|t| t.powf(-0.5) * (-t).exp()).unwrap();
        assert_abs_diff_eq!(got, PI.sqrt(), epsilon = 1e-3);
        assert!(log_legendre_grid(8, 1.0, 1.0).is_err());
    }

    #[test]
    fn grid_invariants_and_errors() {
        for order in [2, 7, 64, 65, 128, 256] {
            let g = legendre_grid(order, 0.5, 3.0).unwrap();
            assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
            assert!(g.nodes().iter().all(|&x| x > 0.0));
            assert!(g.weights().iter().all(|&w| w >= 0.0));
            assert_abs_diff_eq!(g.weights().iter().sum::<f64>(), 2.5, epsilon = 1e-13);
        }
        assert!(legendre_grid(1, 0.0, 1.0).is_err());
        assert!(legendre_grid(8, 1.0, 1.0).is_err());
        assert!(legendre_grid(8, 2.0, 1.0).is_err());
        let g = legendre_grid(8, 0.0, 1.0).unwrap();
        match g.integrate(|x| if x > 0.5 { f64::NAN } else { x }) {
            Err(Error::Evaluation { node, .. }) => assert!(node > 0.5),
            other => panic!("expected evaluation error, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn ln_gamma_recurrence(x in 1e-3f64..100.0) {
            let lhs = ln_gamma(x + 1.0).unwrap() - ln_gamma(x).unwrap();
            prop_assert!((lhs - x.ln()).abs() <= 1e-10);
        }

        #[test]
        fn digamma_is_derivative_of_ln_gamma(x in 0.1f64..100.0) {
            let h = 1e-6;
            let fd = (ln_gamma(x + h).unwrap() - ln_gamma(x - h).unwrap()) / (2.0 * h);
            let psi = digamma(x).unwrap();
            prop_assert!((fd - psi).abs() <= 1e-4 * psi.abs().max(1e-2));
        }

        #[test]
        fn polynomial_exactness(order in 2usize..=64, coeffs in prop::collection::vec(-1.0f64..1.0, 1..8), hi in 0.5f64..4.0) {
            let degree = (coeffs.len() - 1).min(2 * order - 1);
            let c = &coeffs[..=degree];
            let g = legendre_grid(order, 0.0, hi).unwrap();
            let got = g.integrate(|x| c.iter().rev().fold(0.0, |acc, &ck| acc * x + ck)).unwrap();
            let exact: f64 = c.iter().enumerate().map(|(k, &ck)| ck * hi.powi(k as i32 + 1) / (k as f64 + 1.0)).sum();
            let scale: f64 = c.iter().enumerate().map(|(k, &ck)| ck.abs() * hi.powi(k as i32 + 1) / (k as f64 + 1.0)).sum();
            prop_assert!((got - exact).abs() <= 1e-12 * scale.max(1.0));
        }
    }
}
