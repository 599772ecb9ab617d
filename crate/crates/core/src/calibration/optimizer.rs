//! Box-constrained quasi-Newton descent.
//!
//! Limited-memory BFGS directions with gradient projection onto the box and
//! a backtracking Armijo line search along the projected path. Every iterate
//! stays inside the bounds and the objective never increases, so the best
//! point seen is always returned.

/// Why the optimizer stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Objective fell below the requested target.
    TargetReached,
    /// Projected gradient infinity norm fell below tolerance.
    GradientSmall,
    /// Iteration budget exhausted.
    IterationLimit,
    /// No descent found along the search direction.
    LineSearchStalled,
}

#[derive(Debug, Clone)]
pub struct OptimizerOptions {
    pub max_iterations: usize,
    /// Stop when the projected gradient infinity norm drops below this.
    pub grad_tol: f64,
    /// Stop as soon as the objective drops below this.
    pub f_target: f64,
    /// Number of curvature pairs kept.
    pub memory: usize,
    pub max_line_search_steps: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            max_iterations: 500,
            grad_tol: 1e-8,
            f_target: f64::NEG_INFINITY,
            memory: 8,
            max_line_search_steps: 30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub f_evaluations: usize,
    pub g_evaluations: usize,
    pub stop: StopReason,
}

fn clip(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// Zeroes gradient components that push out of the box at an active bound.
fn project_gradient(g: &[f64], x: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let eps = 1e-12;
    g.iter()
        .enumerate()
        .map(|(i, &gi)| {
            if (x[i] <= lo[i] + eps && gi > 0.0) || (x[i] >= hi[i] - eps && gi < 0.0) {
                0.0
            } else {
                gi
            }
        })
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimises `f` over the box `[lo, hi]` starting from `x0`.
///
/// `grad` must return the gradient of `f`; it is evaluated once per
/// iteration. The returned point is the best iterate encountered.
pub fn minimize_bounded(
    mut f: impl FnMut(&[f64]) -> f64,
    mut grad: impl FnMut(&[f64]) -> Vec<f64>,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &OptimizerOptions,
) -> OptimizeOutcome {
    let n = x0.len();
    assert!(lo.len() == n && hi.len() == n);
    let mut x = x0.to_vec();
    clip(&mut x, lo, hi);

    let mut f_evals = 0usize;
    let mut g_evals = 0usize;
    let mut fx = f(&x);
    f_evals += 1;

    let mut best_x = x.clone();
    let mut best_f = fx;

    let mut s_mem: Vec<Vec<f64>> = Vec::new();
    let mut y_mem: Vec<Vec<f64>> = Vec::new();
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None; // (x, g)

    let mut stop = StopReason::IterationLimit;
    let mut iterations = 0usize;

    if fx < opts.f_target {
        return OptimizeOutcome {
            x,
            f: fx,
            iterations,
            f_evaluations: f_evals,
            g_evaluations: g_evals,
            stop: StopReason::TargetReached,
        };
    }

    for iter in 0..opts.max_iterations {
        iterations = iter + 1;
        let g = grad(&x);
        g_evals += 1;

        if let Some((px, pg)) = prev.take() {
            let s: Vec<f64> = x.iter().zip(px.iter()).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g.iter().zip(pg.iter()).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 * inf_norm(&s) * inf_norm(&y) && sy > 0.0 {
                s_mem.push(s);
                y_mem.push(y);
                if s_mem.len() > opts.memory {
                    s_mem.remove(0);
                    y_mem.remove(0);
                }
            }
        }

        let pg = project_gradient(&g, &x, lo, hi);
        if inf_norm(&pg) < opts.grad_tol {
            stop = StopReason::GradientSmall;
            break;
        }

        // Two-loop recursion on the stored pairs.
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        if !s_mem.is_empty() {
            let m = s_mem.len();
            let mut alpha = vec![0.0; m];
            let rho: Vec<f64> = (0..m).map(|j| 1.0 / dot(&s_mem[j], &y_mem[j])).collect();
            for j in (0..m).rev() {
                alpha[j] = rho[j] * dot(&s_mem[j], &d);
                for i in 0..n {
                    d[i] -= alpha[j] * y_mem[j][i];
                }
            }
            let last = m - 1;
            let gamma = dot(&s_mem[last], &y_mem[last]) / dot(&y_mem[last], &y_mem[last]);
            for v in d.iter_mut() {
                *v *= gamma;
            }
            for j in 0..m {
                let beta = rho[j] * dot(&y_mem[j], &d);
                for i in 0..n {
                    d[i] += s_mem[j][i] * (alpha[j] - beta);
                }
            }
        } else {
            // No curvature yet: cautious steepest-descent step covering at
            // most a few percent of the box.
            let scale = 0.05 / inf_norm(&d).max(1e-300);
            for v in d.iter_mut() {
                *v *= scale.min(1e6);
            }
        }

        // Freeze coordinates pinned at an active bound.
        let freeze = |d: &mut Vec<f64>, x: &[f64]| {
            for i in 0..x.len() {
                let eps = 1e-12;
                if (x[i] <= lo[i] + eps && d[i] < 0.0) || (x[i] >= hi[i] - eps && d[i] > 0.0) {
                    d[i] = 0.0;
                }
            }
        };
        let steepest = |pg: &[f64]| -> Vec<f64> {
            let mut d: Vec<f64> = pg.iter().map(|v| -v).collect();
            let scale = (0.05 / inf_norm(&d).max(1e-300)).min(1e6);
            for v in d.iter_mut() {
                *v *= scale;
            }
            d
        };
        freeze(&mut d, &x);
        if dot(&d, &g) >= 0.0 {
            // Not a descent direction; fall back to the projected gradient.
            d = steepest(&pg);
            freeze(&mut d, &x);
            s_mem.clear();
            y_mem.clear();
        }

        // Backtracking Armijo search along the projected path. Quasi-Newton
        // directions can point across a kink of the piecewise-smooth loss;
        // when the search fails on one, retry once from a fresh
        // steepest-descent direction before giving up.
        const C1: f64 = 1e-4;
        let mut accepted = false;
        for attempt in 0..2 {
            let mut alpha = 1.0;
            for _ in 0..opts.max_line_search_steps {
                let mut x_new: Vec<f64> =
                    x.iter().zip(d.iter()).map(|(a, b)| a + alpha * b).collect();
                clip(&mut x_new, lo, hi);
                let step: Vec<f64> = x_new.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
                if inf_norm(&step) < 1e-15 {
                    break;
                }
                let f_new = f(&x_new);
                f_evals += 1;
                let decrease = dot(&g, &step);
                if f_new <= fx + C1 * decrease || f_new < fx - 1e-16 * fx.abs() {
                    prev = Some((x.clone(), g.clone()));
                    x = x_new;
                    fx = f_new;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if accepted || attempt == 1 {
                break;
            }
            if s_mem.is_empty() {
                break;
            }
            s_mem.clear();
            y_mem.clear();
            prev = None;
            d = steepest(&pg);
            freeze(&mut d, &x);
        }

        if fx < best_f {
            best_f = fx;
            best_x = x.clone();
        }
        if !accepted {
            stop = StopReason::LineSearchStalled;
            break;
        }
        if fx < opts.f_target {
            stop = StopReason::TargetReached;
            break;
        }
    }

    OptimizeOutcome {
        x: best_x,
        f: best_f,
        iterations,
        f_evaluations: f_evals,
        g_evaluations: g_evals,
        stop,
    }
}
