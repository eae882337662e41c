//! The discrete free energy and its itemised breakdown.
//!
//! All integrals are cell sums times `dx^dim`, with the gradient taken by
//! the forward difference of [`crate::grid`].

use crate::grid::{self, GridError, ScalarField};
use crate::model::ModelSpec;
use crate::state::PhaseState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    /// `½∫|∇w|² + ½∫|∇η|²`
    pub dirichlet_v: f64,
    /// `∫γ(w)`, `+∞` if some cell leaves the domain of `γ`.
    pub gamma_term: f64,
    /// `∫g(w, η; u)`
    pub g_term: f64,
    /// `∫α(w, η)|∇θ|`
    pub wtv_term: f64,
    /// `ν∫β(w, η)|∇θ|²`
    pub nu_dirichlet_term: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn zero() -> Self {
        Self {
            dirichlet_v: 0.0,
            gamma_term: 0.0,
            g_term: 0.0,
            wtv_term: 0.0,
            nu_dirichlet_term: 0.0,
            total: 0.0,
        }
    }

    /// The `θ`-dependent part `Φ_ν(v; θ)`.
    pub fn phi(&self) -> f64 {
        self.wtv_term + self.nu_dirichlet_term
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

pub fn free_energy(state: &PhaseState, model: &ModelSpec, nu: f64) -> Result<EnergyBreakdown, GridError> {
    state.w.same_grid(&state.eta)?;
    state.w.same_grid(&state.theta)?;
    let grid = state.grid();
    let vol = grid.cell_volume();
    let pot = model.potential();

    let dirichlet_v = grid::dirichlet_energy(&state.w) + grid::dirichlet_energy(&state.eta);
    let mut gamma_term = 0.0;
    let mut g_term = 0.0;
    for (&w, &eta) in state.w.values().iter().zip(state.eta.values()) {
        gamma_term += pot.gamma(w);
        g_term += pot.g(w, eta);
    }
    let (wtv_term, nu_dirichlet_term) = phi_parts(&state.w, &state.eta, &state.theta, model, nu);
    let gamma_term = gamma_term * vol;
    let g_term = g_term * vol;
    Ok(EnergyBreakdown {
        dirichlet_v,
        gamma_term,
        g_term,
        wtv_term,
        nu_dirichlet_term,
        total: dirichlet_v + gamma_term + g_term + wtv_term + nu_dirichlet_term,
    })
}

/// `Φ_ν(v; θ) = ∫α(v)|∇θ| + ν∫β(v)|∇θ|²`.
pub fn phi_nu(
    w: &ScalarField,
    eta: &ScalarField,
    theta: &ScalarField,
    model: &ModelSpec,
    nu: f64,
) -> Result<f64, GridError> {
    w.same_grid(eta)?;
    w.same_grid(theta)?;
    let (tv, quad) = phi_parts(w, eta, theta, model, nu);
    Ok(tv + quad)
}

/// The two pieces of `Φ_ν` separately.
pub(crate) fn phi_parts(
    w: &ScalarField,
    eta: &ScalarField,
    theta: &ScalarField,
    model: &ModelSpec,
    nu: f64,
) -> (f64, f64) {
    let grid = theta.grid();
    let norms = grid::gradient_norms(grid, theta.values());
    let mob = model.mobility();
    let mut tv = 0.0;
    let mut quad = 0.0;
    for ((&wv, &ev), &n) in w.values().iter().zip(eta.values()).zip(&norms) {
        let m = mob.eval(wv, ev);
        tv += m.a * n;
        quad += m.b * n * n;
    }
    let vol = grid.cell_volume();
    (tv * vol, nu * quad * vol)
}

/// `Σ|∇θ|² dx^dim`, the unweighted quadratic used by the sandwich bounds.
pub fn gradient_square_sum(theta: &ScalarField) -> f64 {
    grid::squared_gradient_sum(theta.grid(), theta.values()) * theta.grid().cell_volume()
}

/// `F*^ν = |F_ν(initial)| + |c*|·|Ω|`.
pub fn energy_bound(initial: &EnergyBreakdown, model: &ModelSpec, volume: f64) -> f64 {
    initial.total.abs() + model.c_star().abs() * volume
}
