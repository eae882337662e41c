//! Accelerated projected gradient on the dual of the orientation problem.
//!
//! The dual smooth part has gradient `-∇θ(p)` with `θ(p) = θ_prev + div p / m`,
//! the primal point recovered from `p`; its Lipschitz constant is at most
//! `‖∇‖² / min m`. Nesterov momentum is restarted whenever the dual
//! objective fails to increase.

use crate::grid;

use super::problem::ThetaProblem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualOptions {
    pub gap_tol: f64,
    pub max_iters: usize,
    pub check_every: usize,
}

impl Default for DualOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-12,
            max_iters: 200_000,
            check_every: 20,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DualOutcome {
    pub theta: Vec<f64>,
    pub dual: Vec<Vec<f64>>,
    pub primal: f64,
    pub dual_value: f64,
    pub iters: usize,
    pub converged: bool,
}

impl DualOutcome {
    pub fn gap(&self) -> f64 {
        self.primal - self.dual_value
    }
}

/// `θ(p) = θ_prev + div p / m` into `out`.
fn recover(problem: &ThetaProblem, p: &[Vec<f64>], div: &mut [f64], out: &mut [f64]) {
    div.iter_mut().for_each(|d| *d = 0.0);
    for (k, comp) in p.iter().enumerate() {
        grid::backward_diff_add(&problem.grid, k, comp, div);
    }
    for i in 0..out.len() {
        out[i] = problem.theta_prev[i] + div[i] / problem.data_weight[i];
    }
}

/// `prox` of `t F*` per cell (radial shrink / ball projection).
fn prox(problem: &ThetaProblem, y: &mut [Vec<f64>], t: f64) {
    let n = problem.len();
    for i in 0..n {
        let norm = y.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt();
        let a = problem.tv_weight[i];
        if norm <= a {
            continue;
        }
        let b = problem.quad_weight[i];
        let scale = (a + (norm - a) * (2.0 * b / (t + 2.0 * b))) / norm;
        y.iter_mut().for_each(|c| c[i] *= scale);
    }
}

pub fn solve(problem: &ThetaProblem, init_dual: Option<&[Vec<f64>]>, opts: &DualOptions) -> DualOutcome {
    let g = problem.grid;
    let n = problem.len();
    let dim = g.dim();
    let lip = grid::grad_operator_norm_bound(&g) / problem.min_data_weight();
    let t = 1.0 / lip;

    let mut p = match init_dual {
        Some(d) => d.to_vec(),
        None => vec![vec![0.0; n]; dim],
    };
    // Pinned entries stay zero; start feasible.
    for k in 0..dim {
        let (ext, stride) = g.axis(k);
        for (i, v) in p[k].iter_mut().enumerate() {
            if (i / stride) % ext + 1 == ext {
                *v = 0.0;
            }
        }
    }
    prox(problem, &mut p, 0.0_f64.max(1e-300));
    let mut y = p.clone();
    let mut p_next = p.clone();
    let mut div = vec![0.0; n];
    let mut theta_y = vec![0.0; n];
    let mut grad = vec![vec![0.0; n]; dim];
    let mut mom = 1.0_f64;

    let mut best_theta = problem.theta_prev.clone();
    let mut best_p = p.clone();
    let mut primal = problem.objective(&best_theta);
    let mut dual_value = problem.dual_objective(&p);
    let mut last_dual = dual_value;
    let mut candidate = vec![0.0; n];
    let mut iters = 0;
    let mut converged = false;
    while iters < opts.max_iters {
        recover(problem, &y, &mut div, &mut theta_y);
        for k in 0..dim {
            grid::forward_diff(&g, k, &theta_y, &mut grad[k]);
        }
        for k in 0..dim {
            for i in 0..n {
                p_next[k][i] = y[k][i] + t * grad[k][i];
            }
        }
        prox(problem, &mut p_next, t);
        let mom_next = 0.5 * (1.0 + (1.0 + 4.0 * mom * mom).sqrt());
        let beta = (mom - 1.0) / mom_next;
        // Gradient restart: the step direction disagrees with the momentum.
        let mut agree = 0.0;
        for k in 0..dim {
            for i in 0..n {
                agree += (p_next[k][i] - p[k][i]) * (p_next[k][i] - y[k][i]);
            }
        }
        let beta = if agree < 0.0 {
            mom = 1.0;
            0.0
        } else {
            mom = mom_next;
            beta
        };
        for k in 0..dim {
            for i in 0..n {
                y[k][i] = p_next[k][i] + beta * (p_next[k][i] - p[k][i]);
            }
        }
        std::mem::swap(&mut p, &mut p_next);
        iters += 1;
        if iters % opts.check_every == 0 || iters == opts.max_iters {
            recover(problem, &p, &mut div, &mut candidate);
            problem.clip(&mut candidate);
            let pv = problem.objective(&candidate);
            let dv = problem.dual_objective(&p);
            if pv - dv < primal - dual_value {
                primal = pv;
                dual_value = dv;
                best_theta.copy_from_slice(&candidate);
                for k in 0..dim {
                    best_p[k].copy_from_slice(&p[k]);
                }
            }
            if dv < last_dual {
                mom = 1.0;
                for k in 0..dim {
                    y[k].copy_from_slice(&p[k]);
                }
            }
            last_dual = dv;
            if primal - dual_value <= opts.gap_tol * (1.0 + primal.abs()) {
                converged = true;
                break;
            }
        }
    }
    DualOutcome {
        theta: best_theta,
        dual: best_p,
        primal,
        dual_value,
        iters,
        converged,
    }
}
