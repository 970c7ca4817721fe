//! Damped fixed-point iteration with optional Anderson mixing.
//!
//! The scalars live on wildly different scales (around 1e-12 for `e_i` and
//! 1e11 for `e~_i` with physical noise powers), so convergence is measured
//! componentwise relative to the iterate, and Anderson extrapolation works on
//! logarithms.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    /// Bound on the componentwise relative residual `|g(x) - x| / max(|g(x)|, |x|)`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Initial damping `alpha` of `x <- (1 - alpha) x + alpha g(x)`.
    pub damping: f64,
    /// Damping is halved on residual growth, down to this floor.
    pub min_damping: f64,
    /// Anderson history length; 0 gives the plain damped iteration.
    pub anderson_depth: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            tolerance: 1e-10,
            max_iterations: 5000,
            damping: 0.5,
            min_damping: 1.0 / 64.0,
            anderson_depth: 5,
        }
    }
}

impl FixedPointOptions {
    /// The plain damped scheme without extrapolation.
    pub fn damped(damping: f64) -> Self {
        FixedPointOptions {
            damping,
            anderson_depth: 0,
            ..Default::default()
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance", "must be > 0"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::invalid("damping", "must lie in (0, 1]"));
        }
        if !(self.min_damping > 0.0 && self.min_damping <= self.damping) {
            return Err(Error::invalid("min_damping", "must lie in (0, damping]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct IterationOutcome {
    /// Last evaluated map output `g(x)`; equals `x` at convergence.
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub residual_trace: Vec<f64>,
}

pub(crate) fn relative_residual(x: &[f64], g: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .map(|(&a, &b)| {
            let scale = a.abs().max(b.abs());
            if scale == 0.0 {
                0.0
            } else {
                (a - b).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

/// Iterates `x <- g(x)` from `init` until the relative residual drops below
/// the tolerance. Iterates are kept nonnegative.
///
/// With `anderson_depth > 0` the extrapolation runs on `ln x` over the
/// components where `g(x) > 0`, which makes it insensitive to the scale of each
/// scalar; components mapped to zero are held at zero. Steps are discarded
/// when the residual grows tenfold past the best seen so far, or when the map
/// fails at the extrapolated point; the iteration then restarts from the best
/// point.
pub(crate) fn iterate<G>(init: &[f64], opts: &FixedPointOptions, mut map: G) -> Result<IterationOutcome>
where
    G: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    opts.validate()?;
    let n = init.len();
    let depth = opts.anderson_depth.min(n);
    let mut x: Vec<f64> = init.iter().map(|v| v.max(0.0)).collect();
    let mut g = map(&x)?;
    if !g.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("fixed point", "map produced non-finite values"));
    }
    let mut alpha = opts.damping;
    let mut history: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut active: Vec<bool> = vec![false; n];
    let mut best = (x.clone(), g.clone(), f64::INFINITY);
    let mut prev_residual = f64::INFINITY;
    let mut trace = Vec::new();

    for iteration in 0..=opts.max_iterations {
        let residual = relative_residual(&x, &g);
        trace.push(residual);
        if residual < opts.tolerance {
            return Ok(IterationOutcome {
                values: g,
                iterations: iteration,
                residual,
                converged: true,
                residual_trace: trace,
            });
        }
        if iteration == opts.max_iterations {
            break;
        }
        if residual < best.2 {
            best = (x.clone(), g.clone(), residual);
        } else if depth > 0 && residual > 10.0 * best.2 {
            history.clear();
            alpha = (alpha / 2.0).max(opts.min_damping);
            x = best.0.clone();
            g = best.1.clone();
        }
        if depth == 0 && residual > prev_residual {
            alpha = (alpha / 2.0).max(opts.min_damping);
        }
        prev_residual = residual;

        let mut candidate = if depth > 0 {
            let now: Vec<bool> = g.iter().map(|&v| v > 0.0).collect();
            if now != active {
                history.clear();
                active = now;
            }
            let idx: Vec<usize> = (0..n).filter(|&k| active[k]).collect();
            let u: Vec<f64> = idx
                .iter()
                .map(|&k| if x[k] > 0.0 { x[k].ln() } else { g[k].ln() })
                .collect();
            let gu: Vec<f64> = idx.iter().map(|&k| g[k].ln()).collect();
            history.push((u.clone(), gu.clone()));
            if history.len() > depth + 1 {
                history.remove(0);
            }
            let next = anderson_step(&history).unwrap_or_else(|| damped(&u, &gu, alpha));
            let mut c = vec![0.0; n];
            for (j, &k) in idx.iter().enumerate() {
                c[k] = next[j].exp();
            }
            c
        } else {
            damped(&x, &g, alpha).into_iter().map(|v| v.max(0.0)).collect()
        };

        let mut attempts = 0;
        loop {
            match map(&candidate) {
                Ok(out) if out.iter().all(|v| v.is_finite()) => {
                    x = candidate;
                    g = out;
                    break;
                }
                Ok(_) | Err(_) if attempts < 30 => {
                    // Fall back toward the best point with a shorter step.
                    attempts += 1;
                    history.clear();
                    alpha = (alpha / 2.0).max(opts.min_damping);
                    let t = 0.5f64.powi(attempts);
                    candidate = (0..n)
                        .map(|k| {
                            let (bx, bg) = (best.0[k], best.1[k]);
                            (bx + t * alpha * (bg - bx)).max(0.0)
                        })
                        .collect();
                }
                Ok(_) => {
                    return Err(Error::invalid("fixed point", "map produced non-finite values"));
                }
                Err(e) => return Err(e),
            }
        }
    }
    let residual = *trace.last().unwrap_or(&f64::INFINITY);
    Ok(IterationOutcome {
        values: g,
        iterations: opts.max_iterations,
        residual,
        converged: false,
        residual_trace: trace,
    })
}

fn damped(y: &[f64], gy: &[f64], alpha: f64) -> Vec<f64> {
    y.iter().zip(gy).map(|(a, b)| (1.0 - alpha) * a + alpha * b).collect()
}

/// Type-II Anderson extrapolation over the stored `(x_i, g(x_i))` pairs.
fn anderson_step(history: &[(Vec<f64>, Vec<f64>)]) -> Option<Vec<f64>> {
    let m = history.len().checked_sub(1)?;
    if m == 0 {
        return None;
    }
    let n = history[0].0.len();
    let f = |i: usize| -> Vec<f64> { (0..n).map(|k| history[i].1[k] - history[i].0[k]).collect() };
    let fs: Vec<Vec<f64>> = (0..=m).map(f).collect();
    let df = DMatrix::from_fn(n, m, |k, j| fs[j + 1][k] - fs[j][k]);
    let rhs = DVector::from_fn(n, |k, _| fs[m][k]);
    let svd = df.svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) {
        return None;
    }
    let gamma = svd.solve(&rhs, 1e-12 * smax).ok()?;
    let next: Vec<f64> = (0..n)
        .map(|k| {
            let mut v = history[m].1[k];
            for j in 0..m {
                v -= gamma[j] * (history[j + 1].1[k] - history[j].1[k]);
            }
            v
        })
        .collect();
    next.iter().all(|v| v.is_finite()).then_some(next)
}
