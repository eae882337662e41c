//! The order-parameter half of a time step.
//!
//! The coupling `∇g` is frozen at a truncated guess `v†`; the remaining
//! problem is strongly convex and is solved by proximal gradient with `γ`
//! handled through its resolvent. The guess is then updated by fixed-point
//! iteration, which contracts with ratio at most `h L` for `L` the `C²` norm
//! of `g` on the unit square.

use thiserror::Error;

use crate::grid::{self, GridError, ScalarField};
use crate::model::ModelSpec;
use crate::state;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VStepError {
    #[error("fixed-point loop did not converge in {iters} iterations (last difference {residual:e})")]
    OuterNoConvergence { iters: usize, residual: f64 },
    #[error("inner solve did not converge in {iters} iterations (residual {residual:e}) at outer iteration {outer}")]
    InnerNoConvergence { outer: usize, iters: usize, residual: f64 },
    #[error("no feasible point for gamma: cell {cell} has w = {w}")]
    InfeasibleGamma { cell: usize, w: f64 },
    #[error("invalid order-parameter step parameter: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VStepParams {
    pub h: f64,
    /// Stop when successive fixed-point iterates are this close in `L²`.
    pub outer_tol: f64,
    /// Stop the inner solve when one proximal-gradient step moves less than this in `L²`.
    pub inner_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl VStepParams {
    /// Tolerances scaled with `√|Ω|`: `1e-10` outer, `1e-13` inner.
    pub fn for_grid(h: f64, grid: &grid::GridSpec) -> Self {
        let scale = grid.volume().sqrt();
        Self {
            h,
            outer_tol: 1e-10 * scale,
            inner_tol: 1e-13 * scale,
            max_outer: 200,
            max_inner: 100_000,
        }
    }

    fn validate(&self) -> Result<(), VStepError> {
        for (name, v) in [("h", self.h), ("outer_tol", self.outer_tol), ("inner_tol", self.inner_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(VStepError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(VStepError::InvalidParams("iteration caps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VStepReport {
    pub outer_iters: usize,
    /// Successive-difference ratios of the fixed-point loop, kept only while
    /// the differences are well above the inner tolerance.
    pub contraction_ratios: Vec<f64>,
    /// Last entry of `contraction_ratios`, `NaN` if none was measurable.
    pub final_contraction_ratio: f64,
    pub inner_iters_total: usize,
    /// Largest distance of `(w, η)` from `[o*, ι*] × [0, 1]`.
    pub box_violation: f64,
    /// Last fixed-point difference.
    pub residual: f64,
    /// `(1/2h)‖v_new - v_prev‖²`.
    pub dissipation: f64,
}

impl VStepReport {
    pub fn max_contraction_ratio(&self) -> f64 {
        self.contraction_ratios.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct VStepOutput {
    pub w: ScalarField,
    pub eta: ScalarField,
    pub report: VStepReport,
}

/// Data of the inner problem that stays fixed across outer iterations.
struct Inner<'a> {
    grid: grid::GridSpec,
    model: &'a ModelSpec,
    h: f64,
    w_prev: &'a [f64],
    eta_prev: &'a [f64],
    /// `|∇θ_prev|` and `ν|∇θ_prev|²` per cell.
    tv_coef: Vec<f64>,
    quad_coef: Vec<f64>,
    step: f64,
}

impl Inner<'_> {
    /// Proximal gradient on the frozen problem from `(w, eta)` in place.
    /// Returns the number of iterations.
    fn solve(
        &self,
        coupling: &[[f64; 2]],
        w: &mut Vec<f64>,
        eta: &mut Vec<f64>,
        tol: f64,
        max_iters: usize,
        outer: usize,
    ) -> Result<usize, VStepError> {
        let n = w.len();
        let vol = self.grid.cell_volume();
        let pot = self.model.potential();
        let mob = self.model.mobility();
        let mut lap_w = vec![0.0; n];
        let mut lap_eta = vec![0.0; n];
        let mut buf = vec![0.0; n];
        let mut next_w = vec![0.0; n];
        let mut next_eta = vec![0.0; n];
        let t = self.step;
        let mut residual = f64::INFINITY;
        for iter in 1..=max_iters {
            laplacian(&self.grid, w, &mut buf, &mut lap_w);
            laplacian(&self.grid, eta, &mut buf, &mut lap_eta);
            let mut sq = 0.0;
            for i in 0..n {
                let m = mob.eval(w[i], eta[i]);
                let gw = (w[i] - self.w_prev[i]) / self.h - lap_w[i]
                    + coupling[i][0]
                    + self.tv_coef[i] * m.grad_a[0]
                    + self.quad_coef[i] * m.grad_b[0];
                let ge = (eta[i] - self.eta_prev[i]) / self.h - lap_eta[i]
                    + coupling[i][1]
                    + self.tv_coef[i] * m.grad_a[1]
                    + self.quad_coef[i] * m.grad_b[1];
                next_w[i] = pot.gamma_prox(t, w[i] - t * gw);
                next_eta[i] = eta[i] - t * ge;
                let (dw, de) = (next_w[i] - w[i], next_eta[i] - eta[i]);
                sq += dw * dw + de * de;
            }
            std::mem::swap(w, &mut next_w);
            std::mem::swap(eta, &mut next_eta);
            residual = (sq * vol).sqrt();
            if residual <= tol {
                return Ok(iter);
            }
        }
        Err(VStepError::InnerNoConvergence {
            outer,
            iters: max_iters,
            residual,
        })
    }
}

fn laplacian(g: &grid::GridSpec, f: &[f64], buf: &mut [f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for k in 0..g.dim() {
        grid::forward_diff(g, k, f, buf);
        grid::backward_diff_add(g, k, buf, out);
    }
}

/// `∇g` at the componentwise truncation to `[0, 1]`.
fn frozen_coupling(model: &ModelSpec, w: &[f64], eta: &[f64]) -> Vec<[f64; 2]> {
    let pot = model.potential();
    w.iter()
        .zip(eta)
        .map(|(&a, &b)| pot.grad_g(a.clamp(0.0, 1.0), b.clamp(0.0, 1.0)))
        .collect()
}

/// Largest distance of `(w, η)` from `[o*, ι*] × [0, 1]`.
pub fn box_violation(w: &ScalarField, eta: &ScalarField, model: &ModelSpec) -> f64 {
    let (lo, hi) = (model.o_star(), model.iota_star());
    let dw = w.values().iter().map(|&x| (lo - x).max(x - hi).max(0.0));
    let de = eta.values().iter().map(|&x| (-x).max(x - 1.0).max(0.0));
    dw.chain(de).fold(0.0, f64::max)
}

/// One order-parameter step from `(w_prev, η_prev)` with `θ_prev` frozen.
pub fn v_step(
    w_prev: &ScalarField,
    eta_prev: &ScalarField,
    theta_prev: &ScalarField,
    model: &ModelSpec,
    nu: f64,
    params: &VStepParams,
) -> Result<VStepOutput, VStepError> {
    params.validate()?;
    if !(nu >= 0.0 && nu.is_finite()) {
        return Err(VStepError::InvalidParams(format!("nu must be nonnegative, got {nu}")));
    }
    w_prev.same_grid(eta_prev)?;
    w_prev.same_grid(theta_prev)?;
    let grid = *w_prev.grid();
    let pot = model.potential();
    let mob = model.mobility();

    let tv_coef = grid::gradient_norms(&grid, theta_prev.values());
    let quad_coef: Vec<f64> = tv_coef.iter().map(|a| nu * a * a).collect();
    // Lipschitz bound of the smooth part and its strong convexity 1/h.
    let [ha, hb] = mob.hessian_bounds();
    let curv = tv_coef
        .iter()
        .zip(&quad_coef)
        .map(|(a, b)| a * ha + b * hb)
        .fold(0.0, f64::max);
    let lip = 1.0 / params.h + grid::grad_operator_norm_bound(&grid) + curv;
    let inner = Inner {
        grid,
        model,
        h: params.h,
        w_prev: w_prev.values(),
        eta_prev: eta_prev.values(),
        tv_coef,
        quad_coef,
        step: 2.0 / (lip + 1.0 / params.h),
    };

    let mut dagger_w = w_prev.values().to_vec();
    let mut dagger_eta = eta_prev.values().to_vec();
    let mut w = dagger_w.clone();
    let mut eta = dagger_eta.clone();
    let mut ratios = Vec::new();
    let mut prev_diff = f64::NAN;
    let mut inner_total = 0;
    let noise_floor = 1e3 * params.inner_tol;
    for outer in 1..=params.max_outer {
        let coupling = frozen_coupling(model, &dagger_w, &dagger_eta);
        inner_total += inner.solve(&coupling, &mut w, &mut eta, params.inner_tol, params.max_inner, outer)?;
        let diff = state::l2_distance(&grid, &w, &eta, &dagger_w, &dagger_eta);
        if prev_diff > noise_floor && diff > noise_floor {
            ratios.push(diff / prev_diff);
        }
        prev_diff = diff;
        dagger_w.copy_from_slice(&w);
        dagger_eta.copy_from_slice(&eta);
        if diff <= params.outer_tol {
            if let Some((cell, &bad)) = w.iter().enumerate().find(|(_, &x)| !pot.gamma(x).is_finite()) {
                return Err(VStepError::InfeasibleGamma { cell, w: bad });
            }
            let w_new = ScalarField::from_vec(grid, w)?;
            let eta_new = ScalarField::from_vec(grid, eta)?;
            let dist = state::v_distance(&w_new, &eta_new, w_prev, eta_prev);
            let report = VStepReport {
                outer_iters: outer,
                final_contraction_ratio: ratios.last().copied().unwrap_or(f64::NAN),
                contraction_ratios: ratios,
                inner_iters_total: inner_total,
                box_violation: box_violation(&w_new, &eta_new, model),
                residual: diff,
                dissipation: dist * dist / (2.0 * params.h),
            };
            return Ok(VStepOutput {
                w: w_new,
                eta: eta_new,
                report,
            });
        }
    }
    Err(VStepError::OuterNoConvergence {
        iters: params.max_outer,
        residual: prev_diff,
    })
}

/// `‖v₁ - v₂‖² / ‖v₀,₁ - v₀,₂‖²` for two steps from different starts; `0/0`
/// counts as `0`.
pub fn v_step_perturbation_bound(start1: (&ScalarField, &ScalarField), start2: (&ScalarField, &ScalarField), out1: &VStepOutput, out2: &VStepOutput) -> f64 {
    let before = state::v_distance(start1.0, start1.1, start2.0, start2.1);
    let after = state::v_distance(&out1.w, &out1.eta, &out2.w, &out2.eta);
    if before == 0.0 {
        if after == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (after / before).powi(2)
    }
}

/// The frozen-coupling functional (divided by nothing: true integrals) at
/// `v`, used by tests and diagnostics:
/// `(1/2h)‖v - v_prev‖² + ½‖∇v‖² + Γ(v) + ⟨G, v⟩ + Σ(|∇θ|α + ν|∇θ|²β)dx^d`.
#[allow(clippy::too_many_arguments)]
pub fn frozen_objective(
    w: &ScalarField,
    eta: &ScalarField,
    w_prev: &ScalarField,
    eta_prev: &ScalarField,
    theta_prev: &ScalarField,
    dagger: (&ScalarField, &ScalarField),
    model: &ModelSpec,
    nu: f64,
    h: f64,
) -> f64 {
    let grid = w.grid();
    let vol = grid.cell_volume();
    let coupling = frozen_coupling(model, dagger.0.values(), dagger.1.values());
    let norms = grid::gradient_norms(grid, theta_prev.values());
    let pot = model.potential();
    let mob = model.mobility();
    let dist = state::v_distance(w, eta, w_prev, eta_prev);
    let mut cells = 0.0;
    for i in 0..grid.len() {
        let (a, b) = (w.values()[i], eta.values()[i]);
        let m = mob.eval(a, b);
        cells += pot.gamma(a) + coupling[i][0] * a + coupling[i][1] * b + norms[i] * m.a + nu * norms[i] * norms[i] * m.b;
    }
    dist * dist / (2.0 * h) + grid::dirichlet_energy(w) + grid::dirichlet_energy(eta) + cells * vol
}
