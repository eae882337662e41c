//! Huber-smoothed orientation problem, solved by accelerated gradient
//! descent with backtracking and restarts. Only a cross-check.

use crate::grid;

use super::problem::ThetaProblem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothedOptions {
    pub mu: f64,
    /// Target Euclidean norm of the gradient.
    pub grad_tol: f64,
    pub max_iters: usize,
}

impl Default for SmoothedOptions {
    fn default() -> Self {
        Self {
            mu: 1e-6,
            grad_tol: 1e-10,
            max_iters: 2_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SmoothedOutcome {
    pub theta: Vec<f64>,
    pub iters: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Global Lipschitz bound of the smoothed gradient.
fn lipschitz_bound(problem: &ThetaProblem, mu: f64) -> f64 {
    let m = problem.data_weight.iter().copied().fold(0.0, f64::max);
    let curv = problem
        .tv_weight
        .iter()
        .zip(&problem.quad_weight)
        .map(|(a, b)| a / mu + 2.0 * b)
        .fold(0.0, f64::max);
    m + grid::grad_operator_norm_bound(&problem.grid) * curv
}

/// One continuation stage at fixed `μ`.
///
/// Near the minimiser objective differences drown in rounding, so the
/// sufficient-decrease test allows a few ulps and restarts are triggered by
/// the gradient direction rather than by function values.
fn stage(problem: &ThetaProblem, x: &mut Vec<f64>, mu: f64, grad_tol: f64, budget: usize) -> (usize, f64) {
    let l_max = lipschitz_bound(problem, mu);
    let mut lip = (l_max * 1e-3).max(1e-12);
    let mut y = x.clone();
    let mut t = 1.0_f64;
    let mut iters = 0;
    let mut gnorm = norm(&problem.smoothed_gradient(x, mu));
    while iters < budget && gnorm > grad_tol {
        let g = problem.smoothed_gradient(&y, mu);
        let fy = problem.smoothed_objective(&y, mu);
        let g_sq: f64 = g.iter().map(|v| v * v).sum();
        let slack = 8.0 * f64::EPSILON * (1.0 + fy.abs());
        let mut next: Vec<f64>;
        loop {
            next = y.iter().zip(&g).map(|(yi, gi)| yi - gi / lip).collect();
            if problem.smoothed_objective(&next, mu) <= fy - 0.5 * g_sq / lip + slack || lip >= l_max {
                break;
            }
            lip = (2.0 * lip).min(l_max);
        }
        let uphill: f64 = g.iter().zip(next.iter().zip(x.iter())).map(|(gi, (n, o))| gi * (n - o)).sum();
        if uphill > 0.0 {
            t = 1.0;
            y.clone_from(&next);
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            for i in 0..y.len() {
                y[i] = next[i] + beta * (next[i] - x[i]);
            }
            t = t_next;
        }
        *x = next;
        lip = (0.95 * lip).max(1e-12);
        iters += 1;
        if iters % 10 == 0 {
            gnorm = norm(&problem.smoothed_gradient(x, mu));
        }
    }
    gnorm = norm(&problem.smoothed_gradient(x, mu));
    (iters, gnorm)
}

/// Minimises `P_μ` from `init`, with a continuation on `μ` ending at
/// `opts.mu`.
pub fn solve(problem: &ThetaProblem, init: &[f64], opts: &SmoothedOptions) -> SmoothedOutcome {
    assert!(opts.mu > 0.0, "smoothing parameter must be positive");
    let mut x = init.to_vec();
    let mut mu = (opts.mu * 1e4).min(1e-1).max(opts.mu);
    let mut iters = 0;
    let mut gnorm;
    loop {
        let last = mu <= opts.mu;
        let tol = if last { opts.grad_tol } else { opts.grad_tol.max(1e-6) };
        let (used, g) = stage(problem, &mut x, mu, tol, opts.max_iters - iters);
        iters += used;
        gnorm = g;
        if last || iters >= opts.max_iters {
            break;
        }
        mu = (mu * 0.1).max(opts.mu);
    }
    SmoothedOutcome {
        converged: gnorm <= opts.grad_tol,
        theta: x,
        iters,
        grad_norm: gnorm,
    }
}
