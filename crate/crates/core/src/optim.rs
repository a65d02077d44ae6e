//! Derivative-free minimizers: Nelder–Mead for the variational parameters and
//! golden-section search for the scalar decision.

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadConfig {
    pub max_iter: usize,
    /// Stop once every vertex lies within this (sup-norm) distance of the best.
    pub diameter_tol: f64,
    /// Edge length of the initial simplex.
    pub initial_step: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        NelderMeadConfig {
            max_iter: 500,
            diameter_tol: 1e-9,
            initial_step: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Best value after each iteration, starting with the initial simplex.
    pub trace: Vec<f64>,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Minimizes `f` from `x0`. Points where `f` fails or is non-finite are
/// treated as `+∞`; only a failure at `x0` itself is returned as an error.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], cfg: &NelderMeadConfig) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let dim = x0.len();
    let f0 = f(x0)?;
    let mut eval = |x: &[f64]| match f(x) {
        Ok(v) if v.is_finite() => v,
        _ => f64::INFINITY,
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((x0.to_vec(), if f0.is_finite() { f0 } else { f64::INFINITY }));
    for i in 0..dim {
        let mut x = x0.to_vec();
        x[i] += cfg.initial_step;
        let v = eval(&x);
        simplex.push((x, v));
    }
    sort_simplex(&mut simplex);

    let mut trace = vec![simplex[0].1];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        if diameter(&simplex) < cfg.diameter_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let worst = simplex[dim].clone();
        let centroid: Vec<f64> = (0..dim)
            .map(|j| simplex[..dim].iter().map(|(x, _)| x[j]).sum::<f64>() / dim as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(REFLECT);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(EXPAND);
            let fe = eval(&xe);
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let xc = along(CONTRACT);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(-CONTRACT);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < worst.1.min(fr) {
                simplex[dim] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = best
                        .iter()
                        .zip(&vertex.0)
                        .map(|(b, v)| b + SHRINK * (v - b))
                        .collect();
                    let v = eval(&x);
                    *vertex = (x, v);
                }
            }
        }
        sort_simplex(&mut simplex);
        trace.push(simplex[0].1);
    }
    if !converged && diameter(&simplex) < cfg.diameter_tol {
        converged = true;
    }
    let (x, value) = simplex.swap_remove(0);
    Ok(Minimum {
        x,
        value,
        iterations,
        converged,
        trace,
    })
}

fn sort_simplex(simplex: &mut [(Vec<f64>, f64)]) {
    // stable: earlier vertices win ties
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
}

fn diameter(simplex: &[(Vec<f64>, f64)]) -> f64 {
    let best = &simplex[0].0;
    simplex[1..]
        .iter()
        .flat_map(|(x, _)| x.iter().zip(best).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimization of a unimodal `f` on `[lo, hi]`.
///
/// The interior estimate is compared against both endpoints; ties resolve to
/// the smallest argument, so a flat `f` returns `lo`.
pub fn golden_section<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    let mid = 0.5 * (a + b);
    let candidates = [(lo, f(lo)?), (mid, f(mid)?), (hi, f(hi)?)];
    let mut best = candidates[0];
    for &(x, v) in &candidates[1..] {
        if v < best.1 {
            best = (x, v);
        }
    }
    Ok(best.0)
}
