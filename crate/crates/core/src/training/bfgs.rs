//! Full-memory BFGS with a strong-Wolfe line search.

use std::ops::ControlFlow;

use crate::nn::matrix::dot;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    /// Stop once `‖∇f‖₂ < tol`.
    pub tol: f64,
    pub max_iters: usize,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Objective evaluations allowed per line search.
    pub max_line_search: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 1000,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    /// The line search failed twice in a row, once after resetting the
    /// inverse-Hessian approximation.
    LineSearchFailure,
    /// The per-iteration callback asked to stop.
    Stopped,
    /// The objective was non-finite at the starting point.
    NonFiniteStart,
}

/// State passed to the per-iteration callback.
#[derive(Debug)]
pub struct IterState<'a> {
    pub iter: usize,
    pub x: &'a [f64],
    pub f: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct BfgsReport {
    /// Lowest-objective iterate seen.
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// Set when the run ended on a line-search failure.
    pub warning: bool,
    /// `(f, ‖∇f‖)` at iteration 0, 1, …
    pub history: Vec<(f64, f64)>,
}

/// Minimizes `f` given `fg(x) = (f(x), ∇f(x))`. Non-finite objective values
/// are treated as `+∞`, which makes the line search back off.
pub fn bfgs_minimize<F>(fg: F, x0: &[f64], options: &BfgsOptions) -> BfgsReport
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    bfgs_minimize_with(fg, x0, options, |_| ControlFlow::Continue(()))
}

/// [`bfgs_minimize`] with a callback run after every accepted iterate
/// (including the start, `iter = 0`). Returning `Break` ends the run.
pub fn bfgs_minimize_with<F, C>(
    mut fg: F,
    x0: &[f64],
    options: &BfgsOptions,
    mut callback: C,
) -> BfgsReport
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
    C: FnMut(&IterState<'_>) -> ControlFlow<()>,
{
    let n = x0.len();
    let mut evaluations = 1;
    let mut x = x0.to_vec();
    let (mut f, mut g) = fg(&x);
    let mut gnorm = dot(&g, &g).sqrt();
    let mut history = vec![(f, gnorm)];
    let report =
        |x: Vec<f64>, f, gnorm, iterations, evaluations, termination, history| BfgsReport {
            x,
            f,
            grad_norm: gnorm,
            iterations,
            evaluations,
            termination,
            warning: termination == Termination::LineSearchFailure,
            history,
        };
    if !f.is_finite() || !g.iter().all(|v| v.is_finite()) {
        return report(
            x,
            f,
            gnorm,
            0,
            evaluations,
            Termination::NonFiniteStart,
            history,
        );
    }
    if callback(&IterState {
        iter: 0,
        x: &x,
        f,
        grad_norm: gnorm,
    })
    .is_break()
    {
        return report(x, f, gnorm, 0, evaluations, Termination::Stopped, history);
    }
    if gnorm < options.tol {
        return report(
            x,
            f,
            gnorm,
            0,
            evaluations,
            Termination::GradientTolerance,
            history,
        );
    }

    // Inverse Hessian approximation, dense row-major; None means a scaled
    // identity that is materialized at the first update.
    let mut h: Option<Vec<f64>> = None;
    let mut id_scale = 1.0;
    let mut direction = vec![0.0; n];
    let mut iter = 0;
    let mut just_reset = false;
    let termination = loop {
        if iter >= options.max_iters {
            break Termination::MaxIterations;
        }
        // p = -H g
        match &h {
            Some(h) => {
                for i in 0..n {
                    direction[i] = -dot(&h[i * n..(i + 1) * n], &g);
                }
            }
            None => {
                for i in 0..n {
                    direction[i] = -id_scale * g[i];
                }
            }
        }
        let mut slope = dot(&direction, &g);
        if !(slope < 0.0) {
            // Lost descent; fall back to steepest descent.
            h = None;
            for i in 0..n {
                direction[i] = -id_scale * g[i];
            }
            slope = dot(&direction, &g);
        }
        let alpha0 = if h.is_none() {
            (1.0 / gnorm).min(1.0)
        } else {
            1.0
        };
        let search = line_search(&mut fg, &x, f, slope, &direction, alpha0, options);
        evaluations += search.evaluations;
        let Some(step) = search.accepted else {
            if just_reset {
                break Termination::LineSearchFailure;
            }
            h = None;
            id_scale = 1.0;
            just_reset = true;
            continue;
        };
        just_reset = false;
        iter += 1;

        let s: Vec<f64> = direction.iter().map(|p| step.alpha * p).collect();
        let y: Vec<f64> = step.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let s_norm = dot(&s, &s).sqrt();
        let y_norm = dot(&y, &y).sqrt();
        if sy > 1e-12 * s_norm * y_norm {
            let hm = h.get_or_insert_with(|| {
                // Scale the initial matrix by sᵀy / yᵀy before the first update.
                id_scale = sy / dot(&y, &y);
                let mut m = vec![0.0; n * n];
                for i in 0..n {
                    m[i * n + i] = id_scale;
                }
                m
            });
            bfgs_update(hm, &s, &y, sy);
        }

        x = step.x;
        f = step.f;
        g = step.g;
        gnorm = dot(&g, &g).sqrt();
        history.push((f, gnorm));
        if callback(&IterState {
            iter,
            x: &x,
            f,
            grad_norm: gnorm,
        })
        .is_break()
        {
            break Termination::Stopped;
        }
        if gnorm < options.tol {
            break Termination::GradientTolerance;
        }
    };
    report(x, f, gnorm, iter, evaluations, termination, history)
}

/// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ`, `ρ = 1/sᵀy`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    let coef = rho * rho * yhy + rho;
    for i in 0..n {
        let row = &mut h[i * n..(i + 1) * n];
        let (si, hyi) = (s[i], hy[i]);
        for j in 0..n {
            row[j] += coef * si * s[j] - rho * (si * hy[j] + hyi * s[j]);
        }
    }
}

struct Accepted {
    alpha: f64,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

struct SearchOutcome {
    accepted: Option<Accepted>,
    evaluations: usize,
}

struct Point {
    alpha: f64,
    f: f64,
    slope: f64,
    x: Vec<f64>,
    g: Vec<f64>,
}

/// Strong-Wolfe line search (bracketing followed by zoom with safeguarded
/// cubic interpolation). If zoom runs out of budget, the best point with
/// sufficient decrease is accepted.
fn line_search<F>(
    fg: &mut F,
    x: &[f64],
    f0: f64,
    slope0: f64,
    p: &[f64],
    alpha_init: f64,
    opts: &BfgsOptions,
) -> SearchOutcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut evaluations = 0;
    let mut eval = |alpha: f64, evaluations: &mut usize| -> Point {
        *evaluations += 1;
        let xa: Vec<f64> = x.iter().zip(p).map(|(xi, pi)| xi + alpha * pi).collect();
        let (mut f, g) = fg(&xa);
        if !f.is_finite() || !g.iter().all(|v| v.is_finite()) {
            f = f64::INFINITY;
        }
        let slope = if f.is_finite() { dot(&g, p) } else { f64::NAN };
        Point {
            alpha,
            f,
            slope,
            x: xa,
            g,
        }
    };
    let armijo = |pt: &Point| pt.f <= f0 + opts.c1 * pt.alpha * slope0;
    let curvature = |pt: &Point| pt.slope.abs() <= -opts.c2 * slope0;
    // Once the decrease is below rounding of f, sufficient decrease is judged
    // on the slope: (2c1 − 1)φ'(0) ≥ φ'(α) ≥ c2 φ'(0).
    let f_noise = 1e-12 * f0.abs().max(f64::MIN_POSITIVE);
    let approx_wolfe = |pt: &Point| {
        pt.f <= f0 + f_noise
            && pt.slope <= (2.0 * opts.c1 - 1.0) * slope0
            && pt.slope >= opts.c2 * slope0
    };
    let done = |pt: Point| Accepted {
        alpha: pt.alpha,
        x: pt.x,
        f: pt.f,
        g: pt.g,
    };

    let mut prev = Point {
        alpha: 0.0,
        f: f0,
        slope: slope0,
        x: x.to_vec(),
        g: Vec::new(),
    };
    let mut alpha = alpha_init;
    let mut first = true;
    let (mut lo, mut hi) = loop {
        if evaluations >= opts.max_line_search {
            return SearchOutcome {
                accepted: None,
                evaluations,
            };
        }
        let cur = eval(alpha, &mut evaluations);
        if !armijo(&cur) && approx_wolfe(&cur) {
            return SearchOutcome {
                accepted: Some(done(cur)),
                evaluations,
            };
        }
        if !armijo(&cur) || (!first && cur.f >= prev.f) {
            break (prev, cur);
        }
        if curvature(&cur) {
            return SearchOutcome {
                accepted: Some(done(cur)),
                evaluations,
            };
        }
        if cur.slope >= 0.0 {
            break (cur, prev);
        }
        first = false;
        alpha = cur.alpha * 2.0;
        prev = cur;
    };

    // zoom: lo satisfies sufficient decrease and has the lowest f so far.
    while evaluations < opts.max_line_search {
        let (a, b) = (lo.alpha, hi.alpha);
        let width = (b - a).abs();
        if width <= 1e-16 * a.abs().max(b.abs()).max(1e-300) {
            break;
        }
        let mut trial = if hi.f.is_finite() {
            cubic_min(a, lo.f, lo.slope, b, hi.f, hi.slope)
        } else {
            f64::NAN
        };
        let (left, right) = if a < b { (a, b) } else { (b, a) };
        let margin = 0.1 * width;
        if !trial.is_finite() || trial < left + margin || trial > right - margin {
            trial = 0.5 * (a + b);
        }
        let cur = eval(trial, &mut evaluations);
        if !armijo(&cur) && approx_wolfe(&cur) {
            return SearchOutcome {
                accepted: Some(done(cur)),
                evaluations,
            };
        }
        if !armijo(&cur) || cur.f >= lo.f {
            hi = cur;
        } else {
            if curvature(&cur) {
                return SearchOutcome {
                    accepted: Some(done(cur)),
                    evaluations,
                };
            }
            if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    let accepted = (lo.alpha > 0.0 && lo.f < f0).then(|| done(lo));
    SearchOutcome {
        accepted,
        evaluations,
    }
}

/// Minimizer of the cubic interpolating `(a, fa, da)` and `(b, fb, db)`.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> f64 {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if !(disc >= 0.0) {
        return f64::NAN;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2)
}
