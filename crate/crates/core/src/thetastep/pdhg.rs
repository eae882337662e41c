//! Primal-dual hybrid gradient for the orientation step.
//!
//! The data term is the primal function (its prox is a per-cell average);
//! the per-cell integrand `a|q| + b|q|²` is dualised, so the dual prox is a
//! radial shrink that reduces to a ball projection when `b = 0`.

use crate::grid;

use super::problem::ThetaProblem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdhgOptions {
    pub gap_tol: f64,
    pub max_iters: usize,
    /// Primal step; `None` picks one from the mean data weight.
    pub tau: Option<f64>,
    /// Dual step; `None` picks `1 / (τ‖∇‖²)`.
    pub sigma: Option<f64>,
    /// Iterations between duality-gap evaluations.
    pub check_every: usize,
    /// Rebalance `τ/σ` from the primal and dual residuals (product kept fixed).
    pub adaptive: bool,
}

impl Default for PdhgOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-12,
            max_iters: 200_000,
            tau: None,
            sigma: None,
            check_every: 20,
            adaptive: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PdhgOutcome {
    /// Primal half of the best certified pair (already clamped).
    pub theta: Vec<f64>,
    pub dual: Vec<Vec<f64>>,
    pub primal: f64,
    pub dual_value: f64,
    pub iters: usize,
    pub converged: bool,
}

impl PdhgOutcome {
    pub fn gap(&self) -> f64 {
        self.primal - self.dual_value
    }
}

/// `prox_{σF*}` on one cell: keep `y` inside the radius-`a` ball, shrink the
/// excess by `shrink = 2b / (σ + 2b)` outside it.
#[inline]
fn dual_prox(y0: f64, y1: f64, a: f64, shrink: f64) -> (f64, f64) {
    let norm = (y0 * y0 + y1 * y1).sqrt();
    if norm <= a {
        return (y0, y1);
    }
    let scale = (a + (norm - a) * shrink) / norm;
    (y0 * scale, y1 * scale)
}

fn divergence_into(g: &crate::grid::GridSpec, p: &[Vec<f64>], out: &mut [f64]) {
    out.iter_mut().for_each(|d| *d = 0.0);
    for (k, comp) in p.iter().enumerate() {
        grid::backward_diff_add(g, k, comp, out);
    }
}

/// Solves the orientation problem from a primal start and an optional dual
/// start (e.g. the dual of the previous time step).
pub fn solve(problem: &ThetaProblem, init: &[f64], init_dual: Option<&[Vec<f64>]>, opts: &PdhgOptions) -> PdhgOutcome {
    let g = problem.grid;
    let n = problem.len();
    let dim = g.dim();
    let norm_sq = grid::grad_operator_norm_bound(&g);

    let mean_m = problem.data_weight.iter().sum::<f64>() / n as f64;
    let mut tau = opts.tau.unwrap_or(1.0 / (mean_m * norm_sq.sqrt()));
    let mut sigma = opts.sigma.unwrap_or(1.0 / (tau * norm_sq));

    let mut theta = init.to_vec();
    let mut theta_bar = theta.clone();
    let mut p = vec![vec![0.0; n]; dim];
    if let Some(d) = init_dual {
        // Start inside the new dual domain; pinned boundary entries stay zero.
        for k in 0..dim {
            p[k].copy_from_slice(&d[k]);
        }
        for k in 0..dim {
            let (ext, stride) = g.axis(k);
            for (i, v) in p[k].iter_mut().enumerate() {
                if (i / stride) % ext + 1 == ext {
                    *v = 0.0;
                }
            }
        }
        for i in 0..n {
            let a = problem.tv_weight[i];
            if problem.quad_weight[i] == 0.0 {
                let norm = (0..dim).map(|k| p[k][i] * p[k][i]).sum::<f64>().sqrt();
                if norm > a {
                    for comp in p.iter_mut() {
                        comp[i] *= a / norm;
                    }
                }
            }
        }
    }
    let mut grad_buf = vec![vec![0.0; n]; dim];
    let mut div = vec![0.0; n];
    divergence_into(&g, &p, &mut div);
    let mut shrink: Vec<f64> = problem.quad_weight.iter().map(|b| 2.0 * b / (sigma + 2.0 * b)).collect();

    // Adaptive balancing state.
    let mut adapt = 0.5;
    let mut theta_old = theta.clone();
    let mut p_old = p.clone();
    let mut div_old = div.clone();

    // Restart state: running averages since the last restart and the best
    // certified pair seen so far.
    let mut avg_theta = theta.clone();
    let mut avg_p = p.clone();
    let mut avg_count = 0.0;
    let mut restart_gap = f64::INFINITY;
    let mut best_theta = theta.clone();
    problem.clip(&mut best_theta);
    let mut best_p = p.clone();
    let mut primal = problem.objective(&best_theta);
    let mut dual_value = problem.dual_objective(&p);

    let mut iters = 0;
    let mut clipped = theta.clone();
    let mut converged = false;
    while iters < opts.max_iters {
        for k in 0..dim {
            grid::forward_diff(&g, k, &theta_bar, &mut grad_buf[k]);
        }
        if dim == 1 {
            for i in 0..n {
                let (y, _) = dual_prox(p[0][i] + sigma * grad_buf[0][i], 0.0, problem.tv_weight[i], shrink[i]);
                p[0][i] = y;
            }
        } else {
            let (p0, p1) = p.split_at_mut(1);
            let (p0, p1) = (&mut p0[0], &mut p1[0]);
            for i in 0..n {
                let (y0, y1) = dual_prox(
                    p0[i] + sigma * grad_buf[0][i],
                    p1[i] + sigma * grad_buf[1][i],
                    problem.tv_weight[i],
                    shrink[i],
                );
                p0[i] = y0;
                p1[i] = y1;
            }
        }
        divergence_into(&g, &p, &mut div);
        for i in 0..n {
            let m = problem.data_weight[i];
            let old = theta[i];
            let new = (old + tau * (div[i] + m * problem.theta_prev[i])) / (1.0 + tau * m);
            theta[i] = new;
            theta_bar[i] = 2.0 * new - old;
        }
        iters += 1;
        avg_count += 1.0;
        let wgt = 1.0 / avg_count;
        for i in 0..n {
            avg_theta[i] += wgt * (theta[i] - avg_theta[i]);
        }
        for k in 0..dim {
            for i in 0..n {
                avg_p[k][i] += wgt * (p[k][i] - avg_p[k][i]);
            }
        }

        if opts.adaptive && iters % opts.check_every == opts.check_every - 1 {
            theta_old.copy_from_slice(&theta);
            div_old.copy_from_slice(&div);
            for k in 0..dim {
                p_old[k].copy_from_slice(&p[k]);
            }
        }
        if iters % opts.check_every == 0 || iters == opts.max_iters {
            if opts.adaptive && adapt > 1e-6 {
                let (rp, rd) = residuals(problem, &theta_old, &theta, &p_old, &p, &div_old, &div, tau, sigma, &mut grad_buf);
                let scale = norm_sq.sqrt();
                let changed = if rp > 1.5 * scale * rd {
                    tau /= 1.0 - adapt;
                    sigma *= 1.0 - adapt;
                    true
                } else if rp * 1.5 < scale * rd {
                    tau *= 1.0 - adapt;
                    sigma /= 1.0 - adapt;
                    true
                } else {
                    false
                };
                if changed {
                    adapt *= 0.95;
                    for (s, b) in shrink.iter_mut().zip(&problem.quad_weight) {
                        *s = 2.0 * b / (sigma + 2.0 * b);
                    }
                    // Restart the extrapolation with the new steps.
                    theta_bar.copy_from_slice(&theta);
                }
            }
            // Candidates: the current iterate and the running average.
            let mut round_best = f64::INFINITY;
            let mut from_avg = false;
            for use_avg in [false, true] {
                let (th, pp) = if use_avg { (&avg_theta, &avg_p) } else { (&theta, &p) };
                clipped.copy_from_slice(th);
                problem.clip(&mut clipped);
                let pv = problem.objective(&clipped);
                let dv = problem.dual_objective(pp);
                let gap = pv - dv;
                if gap < round_best {
                    round_best = gap;
                    from_avg = use_avg;
                }
                if gap < primal - dual_value {
                    primal = pv;
                    dual_value = dv;
                    best_theta.copy_from_slice(&clipped);
                    for k in 0..dim {
                        best_p[k].copy_from_slice(&pp[k]);
                    }
                }
            }
            if primal - dual_value <= opts.gap_tol * (1.0 + primal.abs()) {
                converged = true;
                break;
            }
            if round_best <= 0.2 * restart_gap || !restart_gap.is_finite() {
                if round_best.is_finite() && restart_gap.is_finite() {
                    if from_avg {
                        theta.copy_from_slice(&avg_theta);
                        for k in 0..dim {
                            p[k].copy_from_slice(&avg_p[k]);
                        }
                    }
                    theta_bar.copy_from_slice(&theta);
                    avg_theta.copy_from_slice(&theta);
                    for k in 0..dim {
                        avg_p[k].copy_from_slice(&p[k]);
                    }
                    avg_count = 0.0;
                }
                restart_gap = round_best;
            }
        }
    }
    PdhgOutcome {
        theta: best_theta,
        dual: best_p,
        primal,
        dual_value,
        iters,
        converged,
    }
}

/// `ℓ¹` primal and dual residuals of one iteration.
#[allow(clippy::too_many_arguments)]
fn residuals(
    problem: &ThetaProblem,
    theta_old: &[f64],
    theta: &[f64],
    p_old: &[Vec<f64>],
    p: &[Vec<f64>],
    div_old: &[f64],
    div: &[f64],
    tau: f64,
    sigma: f64,
    buf: &mut [Vec<f64>],
) -> (f64, f64) {
    let g = problem.grid;
    let diff: Vec<f64> = theta_old.iter().zip(theta).map(|(a, b)| a - b).collect();
    let mut rp = 0.0;
    for i in 0..diff.len() {
        rp += (diff[i] / tau + (div_old[i] - div[i])).abs();
    }
    let mut rd = 0.0;
    for k in 0..g.dim() {
        grid::forward_diff(&g, k, &diff, &mut buf[k]);
        for i in 0..diff.len() {
            rd += ((p_old[k][i] - p[k][i]) / sigma - buf[k][i]).abs();
        }
    }
    (rp, rd)
}
