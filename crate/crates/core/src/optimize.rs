//! BFGS minimization with a weak-Wolfe bisection line search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::max_abs;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    /// Stop when the gradient max-norm falls to this value.
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            gradient_tolerance: 1e-8,
            max_iterations: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    GradientTolerance,
    IterationLimit,
    LineSearchStalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub argmin: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LINE_SEARCH: usize = 60;

struct Probe {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn evaluate<F>(fg: &mut F, x: Vec<f64>) -> Option<Probe>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    match fg(&x) {
        Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => Some(Probe { x, f, g }),
        _ => None,
    }
}

enum Search {
    Accepted(Probe),
    /// Every trial point was non-finite.
    NonFinite(Vec<f64>),
    Stalled,
}

/// Bisection search for a point satisfying the weak Wolfe conditions, or the
/// approximate Wolfe conditions once the function change is at rounding level.
fn line_search<F>(fg: &mut F, at: &Probe, dir: &[f64], alpha0: f64) -> Search
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let slope0 = dot(&at.g, dir);
    let f_noise = 1e-12 * (1.0 + at.f.abs());
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut alpha = alpha0;
    let mut any_finite = false;
    let mut last_point = at.x.clone();
    let mut best: Option<Probe> = None;
    for _ in 0..MAX_LINE_SEARCH {
        let x: Vec<f64> = at.x.iter().zip(dir).map(|(x, d)| x + alpha * d).collect();
        last_point.clone_from(&x);
        let Some(trial) = evaluate(fg, x) else {
            hi = alpha;
            alpha = 0.5 * (lo + hi);
            continue;
        };
        any_finite = true;
        let slope = dot(&trial.g, dir);
        if trial.f > at.f + C1 * alpha * slope0 {
            let approx = trial.f <= at.f + f_noise
                && (2.0 * C1 - 1.0) * slope0 >= slope
                && slope >= C2 * slope0;
            if approx {
                return Search::Accepted(trial);
            }
            hi = alpha;
        } else if slope < C2 * slope0 {
            lo = alpha;
            if best.as_ref().is_none_or(|b| trial.f < b.f) {
                best = Some(trial);
            }
        } else {
            return Search::Accepted(trial);
        }
        alpha = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * lo };
    }
    // a strict decrease is still progress even if curvature was never met
    match best {
        Some(b) if b.f < at.f => Search::Accepted(b),
        _ if !any_finite => Search::NonFinite(last_point),
        _ => Search::Stalled,
    }
}

/// Minimizes `f` given a closure returning `(f(x), ∇f(x))`.
///
/// Errors only if the objective is non-finite at `init`, or if every trial
/// point of a line search is non-finite.
pub fn minimize<F>(mut fg: F, init: &[f64], opts: &MinimizeOptions) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(opts.gradient_tolerance > 0.0) {
        return Err(Error::InvalidArgument("gradient_tolerance must be positive".into()));
    }
    let n = init.len();
    let (f0, g0) = fg(init)?;
    if !f0.is_finite() || g0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteObjective { point: init.to_vec() });
    }
    let mut cur = Probe { x: init.to_vec(), f: f0, g: g0 };
    let mut h = identity(n);
    let mut fresh = true;
    let mut iterations = 0;
    let termination = loop {
        if max_abs(&cur.g) <= opts.gradient_tolerance {
            break Termination::GradientTolerance;
        }
        if iterations >= opts.max_iterations {
            break Termination::IterationLimit;
        }
        let mut dir = mat_vec(&h, &cur.g);
        dir.iter_mut().for_each(|d| *d = -*d);
        if dot(&dir, &cur.g) >= 0.0 {
            h = identity(n);
            fresh = true;
            dir = cur.g.iter().map(|g| -g).collect();
        }
        let alpha0 = if fresh {
            1.0f64.min(1.0 / norm(&cur.g))
        } else {
            1.0
        };
        let next = match line_search(&mut fg, &cur, &dir, alpha0) {
            Search::Accepted(p) => p,
            Search::NonFinite(point) => return Err(Error::NonFiniteObjective { point }),
            Search::Stalled if !fresh => {
                // one steepest-descent attempt from a reset metric
                h = identity(n);
                fresh = true;
                continue;
            }
            Search::Stalled => break Termination::LineSearchStalled,
        };
        let s: Vec<f64> = next.x.iter().zip(&cur.x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.g.iter().zip(&cur.g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 0.0 {
            if fresh {
                let scale = sy / dot(&y, &y);
                h.iter_mut().flatten().for_each(|v| *v *= scale);
            }
            bfgs_update(&mut h, &s, &y, sy);
            fresh = false;
        }
        cur = next;
        iterations += 1;
    };
    Ok(Minimum {
        converged: termination == Termination::GradientTolerance,
        argmin: cur.x,
        value: cur.f,
        gradient: cur.g,
        iterations,
        termination,
    })
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

/// `H ← (I − ρ s y')H(I − ρ y s') + ρ s s'`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    let n = s.len();
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bowl(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0] - 3.0, x[1] + 2.0);
        Ok((a * a + b * b, vec![2.0 * a, 2.0 * b]))
    }

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok((f, g))
    }

    #[test]
    fn quadratic_bowl() {
        let m = minimize(bowl, &[0.0, 0.0], &MinimizeOptions::default()).unwrap();
        assert!(m.converged);
        assert!((m.argmin[0] - 3.0).abs() < 1e-6 && (m.argmin[1] + 2.0).abs() < 1e-6, "{m:?}");
    }

    #[test]
    fn constant_objective_returns_init() {
        let m = minimize(|_: &[f64]| Ok((0.0, vec![0.0, 0.0])), &[0.3, -1.0], &MinimizeOptions::default()).unwrap();
        assert!(m.converged);
        assert_eq!(m.argmin, vec![0.3, -1.0]);
        assert_eq!(m.iterations, 0);
    }

    #[test]
    fn rosenbrock_from_standard_start() {
        let m = minimize(rosenbrock, &[-1.2, 1.0], &MinimizeOptions::default()).unwrap();
        assert!((m.argmin[0] - 1.0).abs() < 1e-4 && (m.argmin[1] - 1.0).abs() < 1e-4, "{m:?}");
        assert!(m.value <= 24.2);
    }

    #[test]
    fn non_finite_init_is_an_error() {
        let err = minimize(|_: &[f64]| Ok((f64::NAN, vec![0.0])), &[1.0], &MinimizeOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteObjective { .. }));
    }

    #[test]
    fn steps_back_from_non_finite_region() {
        // exp(x) - 2x blows up for large x; the first trial overshoots into inf
        let f = |x: &[f64]| {
            let e = (50.0 * x[0]).exp();
            Ok((e / 50.0 - 2.0 * x[0], vec![e - 2.0]))
        };
        let m = minimize(f, &[-20.0], &MinimizeOptions::default()).unwrap();
        assert!((m.argmin[0] - 2f64.ln() / 50.0).abs() < 1e-8, "{m:?}");
    }

    #[test]
    fn iteration_cap_is_flagged() {
        let opts = MinimizeOptions {
            max_iterations: 2,
            ..Default::default()
        };
        let m = minimize(rosenbrock, &[-1.2, 1.0], &opts).unwrap();
        assert!(!m.converged);
        assert_eq!(m.termination, Termination::IterationLimit);
        assert!(m.value <= rosenbrock(&[-1.2, 1.0]).unwrap().0);
    }
}
