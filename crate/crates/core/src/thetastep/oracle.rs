//! Reference minimiser for small instances, independent of the
//! primal-dual solver.
//!
//! Averaged projected subgradient descent gives a first estimate; damped
//! Newton steps on the smoothed objective with `μ` driven down to `1e-12`
//! then polish it. The smoothed gap `0 ≤ |q| - (√(|q|²+μ²) - μ) ≤ μ` bounds
//! the polishing error by `μ Σ a`.

use nalgebra::{DMatrix, DVector};

use crate::grid;

use super::problem::ThetaProblem;

pub const MAX_CELLS: usize = 64;
pub const SUBGRADIENT_ITERS: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub theta: Vec<f64>,
    pub objective: f64,
    /// Objective of the averaged subgradient iterate alone.
    pub subgradient_objective: f64,
}

/// Projected subgradient descent with steps `2/(μ(k+2))` and `k`-weighted
/// averaging (the standard strongly convex schedule).
pub fn averaged_subgradient(problem: &ThetaProblem, iters: usize) -> Vec<f64> {
    let mu = problem.min_data_weight();
    let mut x = problem.theta_prev.clone();
    let mut avg = x.clone();
    let mut weight = 0.0;
    let n = x.len();
    let dim = problem.grid.dim();
    let mut q = vec![vec![0.0; n]; dim];
    let mut g = vec![0.0; n];
    let mut div = vec![0.0; n];
    for k in 0..iters {
        // Subgradient m(x - θ_prev) - div(a q/|q| + 2b q), q = ∇x.
        for (kk, comp) in q.iter_mut().enumerate() {
            grid::forward_diff(&problem.grid, kk, &x, comp);
        }
        for i in 0..n {
            let sq: f64 = q.iter().map(|c| c[i] * c[i]).sum();
            let s = if sq > 0.0 { problem.tv_weight[i] / sq.sqrt() } else { 0.0 };
            let scale = s + 2.0 * problem.quad_weight[i];
            q.iter_mut().for_each(|c| c[i] *= scale);
            g[i] = problem.data_weight[i] * (x[i] - problem.theta_prev[i]);
        }
        div.iter_mut().for_each(|d| *d = 0.0);
        for (kk, comp) in q.iter().enumerate() {
            grid::backward_diff_add(&problem.grid, kk, comp, &mut div);
        }
        g.iter_mut().zip(&div).for_each(|(gi, d)| *gi -= d);
        let step = 2.0 / (mu * (k as f64 + 2.0));
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= step * gi;
        }
        problem.clip(&mut x);
        let wk = (k + 1) as f64;
        weight += wk;
        for (a, xi) in avg.iter_mut().zip(&x) {
            *a += (wk / weight) * (xi - *a);
        }
    }
    avg
}

/// Dense Hessian of the smoothed objective.
fn hessian(problem: &ThetaProblem, theta: &[f64], mu: f64) -> DMatrix<f64> {
    let g = problem.grid;
    let n = theta.len();
    let inv = 1.0 / g.dx();
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        hess[(i, i)] += problem.data_weight[i];
    }
    let q = problem.gradient(theta);
    for i in 0..n {
        // Rows of the local difference operator: (neighbour index, axis).
        let rows: Vec<(usize, usize)> = (0..g.dim())
            .filter(|&k| g.has_forward(i, k))
            .map(|k| (i + g.axis(k).1, k))
            .collect();
        if rows.is_empty() {
            continue;
        }
        let sq: f64 = q.iter().map(|c| c[i] * c[i]).sum();
        let s = (sq + mu * mu).sqrt();
        let (a, b) = (problem.tv_weight[i], problem.quad_weight[i]);
        for &(j1, k1) in &rows {
            for &(j2, k2) in &rows {
                let delta = if k1 == k2 { 1.0 } else { 0.0 };
                let local = a * (delta / s - q[k1][i] * q[k2][i] / (s * s * s)) + 2.0 * b * delta;
                let c = local * inv * inv;
                // D_k1 = (e_j1 - e_i)/dx, D_k2 = (e_j2 - e_i)/dx.
                hess[(j1, j2)] += c;
                hess[(j1, i)] -= c;
                hess[(i, j2)] -= c;
                hess[(i, i)] += c;
            }
        }
    }
    hess
}

fn newton_stage(problem: &ThetaProblem, x: &mut [f64], mu: f64) {
    for _ in 0..100 {
        let grad = DVector::from_vec(problem.smoothed_gradient(x, mu));
        let Some(chol) = hessian(problem, x, mu).cholesky() else {
            return;
        };
        let dir = chol.solve(&(-&grad));
        let decrement = -grad.dot(&dir);
        if !(decrement > 1e-28) {
            return;
        }
        let f0 = problem.smoothed_objective(x, mu);
        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-12 {
            let trial: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, d)| a + step * d).collect();
            if problem.smoothed_objective(&trial, mu) <= f0 - 0.25 * step * decrement {
                x.copy_from_slice(&trial);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return;
        }
    }
}

/// High-accuracy reference minimiser; panics above [`MAX_CELLS`] cells.
pub fn minimise(problem: &ThetaProblem) -> OracleResult {
    minimise_with(problem, SUBGRADIENT_ITERS)
}

pub fn minimise_with(problem: &ThetaProblem, subgradient_iters: usize) -> OracleResult {
    assert!(problem.len() <= MAX_CELLS, "oracle limited to {MAX_CELLS} cells");
    let start = averaged_subgradient(problem, subgradient_iters);
    let subgradient_objective = problem.objective(&start);
    let mut x = start.clone();
    let mut mu = 1e-2;
    while mu >= 1e-12 {
        newton_stage(problem, &mut x, mu);
        mu *= 0.1;
    }
    problem.clip(&mut x);
    let polished = problem.objective(&x);
    let (theta, objective) = if polished <= subgradient_objective {
        (x, polished)
    } else {
        (start, subgradient_objective)
    };
    OracleResult {
        theta,
        objective,
        subgradient_objective,
    }
}
