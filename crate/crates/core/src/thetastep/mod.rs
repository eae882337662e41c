//! The orientation half of a time step: a weighted total-variation
//! minimisation with a duality-gap certificate.
//!
//! Every solver hands back a primal iterate and a dual point; the step
//! clamps the primal into the range of `θ_prev` (which cannot increase the
//! objective) and certifies it with the gap against that dual point.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::grid::{GridError, ScalarField};
use crate::model::ModelSpec;

pub mod dual_fista;
pub mod line;
pub mod oracle;
pub mod pdhg;
mod problem;
pub mod smoothed;

pub use problem::ThetaProblem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThetaStepError {
    #[error("orientation solver `{solver}` stopped after {iters} iterations with gap {gap:e}")]
    NoConvergence { solver: String, iters: usize, gap: f64 },
    #[error("unknown orientation solver `{0}`")]
    UnknownSolver(String),
    #[error("invalid orientation step parameter: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaStepParams {
    pub h: f64,
    pub gap_tol: f64,
    pub max_iters: usize,
    pub tau: Option<f64>,
    pub sigma: Option<f64>,
    /// Smoothing of `|∇θ|` for the `smoothed` validator.
    pub smoothing_mu: f64,
    /// Residual balancing of the primal-dual steps.
    pub adaptive_steps: bool,
}

impl ThetaStepParams {
    pub fn new(h: f64) -> Self {
        Self {
            h,
            gap_tol: 1e-8,
            max_iters: 200_000,
            tau: None,
            sigma: None,
            smoothing_mu: 1e-6,
            adaptive_steps: true,
        }
    }

    pub fn validate(&self, norm_sq: f64) -> Result<(), ThetaStepError> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(ThetaStepError::InvalidParams(format!("h must be positive, got {}", self.h)));
        }
        if !(self.gap_tol > 0.0) {
            return Err(ThetaStepError::InvalidParams(format!("gap_tol must be positive, got {}", self.gap_tol)));
        }
        if !(self.smoothing_mu >= 0.0) {
            return Err(ThetaStepError::InvalidParams("smoothing_mu must be nonnegative".into()));
        }
        for step in [self.tau, self.sigma].into_iter().flatten() {
            if !(step > 0.0 && step.is_finite()) {
                return Err(ThetaStepError::InvalidParams(format!("step sizes must be positive, got {step}")));
            }
        }
        if let (Some(tau), Some(sigma)) = (self.tau, self.sigma) {
            if tau * sigma * norm_sq > 1.0 + 1e-12 {
                return Err(ThetaStepError::InvalidParams(format!(
                    "tau*sigma*|grad|^2 = {} exceeds 1",
                    tau * sigma * norm_sq
                )));
            }
        }
        Ok(())
    }

    fn pdhg_options(&self) -> pdhg::PdhgOptions {
        pdhg::PdhgOptions {
            gap_tol: self.gap_tol,
            max_iters: self.max_iters,
            tau: self.tau,
            sigma: self.sigma,
            // Manual steps are taken as given.
            adaptive: self.adaptive_steps && self.tau.is_none() && self.sigma.is_none(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaStepReport {
    pub iters: usize,
    /// `P(θ_new) - D(p)` for the returned dual point `p`.
    pub duality_gap: f64,
    pub objective: f64,
    pub dual_value: f64,
    pub linf_in: f64,
    pub linf_out: f64,
    /// How far the raw solver iterate left the range of `θ_prev` before clamping.
    pub clamp_overshoot: f64,
    /// `(1/h)‖√α₀(θ_new - θ_prev)‖²`.
    pub dissipation: f64,
    pub phi_prev: f64,
    pub phi_new: f64,
    /// `Φ_ν(θ_prev) - Φ_ν(θ_new) - dissipation`; nonnegative up to the gap.
    pub energy_decrease: f64,
}

#[derive(Debug, Clone)]
pub struct ThetaStepOutput {
    pub theta: ScalarField,
    /// Dual point certifying the gap; reusable as a warm start.
    pub dual: Vec<Vec<f64>>,
    pub report: ThetaStepReport,
}

/// What a solver returns before clamping and certification.
#[derive(Debug, Clone)]
pub struct RawSolution {
    pub theta: Vec<f64>,
    pub dual: Vec<Vec<f64>>,
    pub iters: usize,
    pub converged: bool,
}

pub trait ThetaSolver: Send + Sync {
    fn name(&self) -> &str;

    fn solve(
        &self,
        problem: &ThetaProblem,
        warm_dual: Option<&[Vec<f64>]>,
        params: &ThetaStepParams,
    ) -> Result<RawSolution, ThetaStepError>;
}

/// Primal-dual hybrid gradient.
#[derive(Debug, Clone, Copy, Default)]
pub struct PdhgSolver;

impl ThetaSolver for PdhgSolver {
    fn name(&self) -> &str {
        "pdhg"
    }

    fn solve(
        &self,
        problem: &ThetaProblem,
        warm_dual: Option<&[Vec<f64>]>,
        params: &ThetaStepParams,
    ) -> Result<RawSolution, ThetaStepError> {
        let warm = warm_dual.filter(|d| d.len() == problem.grid().dim() && d.iter().all(|c| c.len() == problem.len()));
        let out = pdhg::solve(problem, problem.theta_prev(), warm, &params.pdhg_options());
        Ok(RawSolution {
            theta: out.theta,
            dual: out.dual,
            iters: out.iters,
            converged: out.converged,
        })
    }
}

/// Restarted accelerated projected gradient on the dual.
#[derive(Debug, Clone, Copy, Default)]
pub struct DualFistaSolver;

impl ThetaSolver for DualFistaSolver {
    fn name(&self) -> &str {
        "dual-fista"
    }

    fn solve(
        &self,
        problem: &ThetaProblem,
        warm_dual: Option<&[Vec<f64>]>,
        params: &ThetaStepParams,
    ) -> Result<RawSolution, ThetaStepError> {
        let warm = warm_dual.filter(|d| d.len() == problem.grid().dim() && d.iter().all(|c| c.len() == problem.len()));
        let opts = dual_fista::DualOptions {
            gap_tol: params.gap_tol,
            max_iters: params.max_iters,
            ..Default::default()
        };
        let out = dual_fista::solve(problem, warm, &opts);
        Ok(RawSolution {
            theta: out.theta,
            dual: out.dual,
            iters: out.iters,
            converged: out.converged,
        })
    }
}

/// PDHG for a quarter of the budget, then the dual method warm-started from
/// whichever dual point PDHG reached. PDHG is quick on well-posed steps; the
/// dual method copes better when the flux is nearly degenerate.
#[derive(Debug, Clone, Copy, Default)]
pub struct HybridSolver;

impl ThetaSolver for HybridSolver {
    fn name(&self) -> &str {
        "hybrid"
    }

    fn solve(
        &self,
        problem: &ThetaProblem,
        warm_dual: Option<&[Vec<f64>]>,
        params: &ThetaStepParams,
    ) -> Result<RawSolution, ThetaStepError> {
        let first_budget = (params.max_iters / 4).max(1);
        let first = PdhgSolver.solve(problem, warm_dual, &ThetaStepParams { max_iters: first_budget, ..*params })?;
        if first.converged {
            return Ok(first);
        }
        let rest = ThetaStepParams {
            max_iters: params.max_iters.saturating_sub(first.iters).max(1),
            ..*params
        };
        let second = DualFistaSolver.solve(problem, Some(&first.dual), &rest)?;
        Ok(RawSolution {
            iters: first.iters + second.iters,
            ..second
        })
    }
}

/// Accelerated gradient descent on the smoothed objective; the dual point
/// is the smoothed flux. Its gap includes the smoothing bias `μ Σ a`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SmoothedSolver;

impl ThetaSolver for SmoothedSolver {
    fn name(&self) -> &str {
        "smoothed"
    }

    fn solve(
        &self,
        problem: &ThetaProblem,
        _warm_dual: Option<&[Vec<f64>]>,
        params: &ThetaStepParams,
    ) -> Result<RawSolution, ThetaStepError> {
        if !(params.smoothing_mu > 0.0) {
            return Err(ThetaStepError::InvalidParams("the smoothed solver needs smoothing_mu > 0".into()));
        }
        let opts = smoothed::SmoothedOptions {
            mu: params.smoothing_mu,
            max_iters: params.max_iters.max(smoothed::SmoothedOptions::default().max_iters),
            ..Default::default()
        };
        let out = smoothed::solve(problem, problem.theta_prev(), &opts);
        Ok(RawSolution {
            dual: problem.flux(&out.theta, params.smoothing_mu),
            theta: out.theta,
            iters: out.iters,
            converged: out.converged,
        })
    }
}

/// The small-instance reference minimiser; refuses large grids.
#[derive(Debug, Clone, Copy, Default)]
pub struct SubgradientSolver;

impl ThetaSolver for SubgradientSolver {
    fn name(&self) -> &str {
        "subgradient"
    }

    fn solve(
        &self,
        problem: &ThetaProblem,
        _warm_dual: Option<&[Vec<f64>]>,
        _params: &ThetaStepParams,
    ) -> Result<RawSolution, ThetaStepError> {
        if problem.len() > oracle::MAX_CELLS {
            return Err(ThetaStepError::InvalidParams(format!(
                "the subgradient oracle handles at most {} cells",
                oracle::MAX_CELLS
            )));
        }
        let out = oracle::minimise(problem);
        Ok(RawSolution {
            dual: problem.flux(&out.theta, 1e-12),
            theta: out.theta,
            iters: oracle::SUBGRADIENT_ITERS,
            converged: true,
        })
    }
}

pub type ThetaSolverFactory = fn() -> Box<dyn ThetaSolver>;

pub struct ThetaSolverRegistry {
    factories: BTreeMap<String, ThetaSolverFactory>,
}

impl ThetaSolverRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, factory: ThetaSolverFactory) {
        self.factories.insert(name.to_ascii_lowercase(), factory);
    }

    pub fn create(&self, name: &str) -> Result<Box<dyn ThetaSolver>, ThetaStepError> {
        self.factories
            .get(&name.to_ascii_lowercase())
            .map(|f| f())
            .ok_or_else(|| ThetaStepError::UnknownSolver(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}

impl Default for ThetaSolverRegistry {
    fn default() -> Self {
        let mut reg = Self::empty();
        reg.register("pdhg", || Box::new(PdhgSolver));
        reg.register("dual-fista", || Box::new(DualFistaSolver));
        reg.register("hybrid", || Box::new(HybridSolver));
        reg.register("smoothed", || Box::new(SmoothedSolver));
        reg.register("subgradient", || Box::new(SubgradientSolver));
        reg
    }
}

/// One orientation step with the hybrid solver and no warm start.
pub fn theta_step(
    theta_prev: &ScalarField,
    w: &ScalarField,
    eta: &ScalarField,
    model: &ModelSpec,
    nu: f64,
    params: &ThetaStepParams,
) -> Result<(ScalarField, ThetaStepReport), ThetaStepError> {
    let out = theta_step_with(&HybridSolver, theta_prev, w, eta, model, nu, params, None)?;
    Ok((out.theta, out.report))
}

#[allow(clippy::too_many_arguments)]
pub fn theta_step_with(
    solver: &dyn ThetaSolver,
    theta_prev: &ScalarField,
    w: &ScalarField,
    eta: &ScalarField,
    model: &ModelSpec,
    nu: f64,
    params: &ThetaStepParams,
    warm_dual: Option<&[Vec<f64>]>,
) -> Result<ThetaStepOutput, ThetaStepError> {
    if !(nu >= 0.0 && nu.is_finite()) {
        return Err(ThetaStepError::InvalidParams(format!("nu must be nonnegative, got {nu}")));
    }
    params.validate(crate::grid::grad_operator_norm_bound(theta_prev.grid()))?;
    let problem = ThetaProblem::new(theta_prev, w, eta, model, nu, params.h)?;
    solve_problem(solver, &problem, params, warm_dual)
}

/// Solves, clamps and certifies an already assembled problem. On a line the
/// solver output is finished exactly by [`line::polish`] when possible.
pub fn solve_problem(
    solver: &dyn ThetaSolver,
    problem: &ThetaProblem,
    params: &ThetaStepParams,
    warm_dual: Option<&[Vec<f64>]>,
) -> Result<ThetaStepOutput, ThetaStepError> {
    let mut raw = solver.solve(problem, warm_dual, params)?;
    if let Some((theta, dual)) = line::polish(problem, &raw.theta) {
        raw.theta = theta;
        raw.dual = dual;
        raw.converged = true;
    }
    let (lo, hi) = problem.bounds();
    let clamp_overshoot = raw
        .theta
        .iter()
        .map(|&t| (lo - t).max(t - hi).max(0.0))
        .fold(0.0, f64::max);
    let mut theta = raw.theta;
    problem.clip(&mut theta);

    let objective = problem.objective(&theta);
    let dual_value = problem.dual_objective(&raw.dual);
    let duality_gap = objective - dual_value;
    if !raw.converged || !(duality_gap <= params.gap_tol * (1.0 + objective.abs())) {
        return Err(ThetaStepError::NoConvergence {
            solver: solver.name().to_string(),
            iters: raw.iters,
            gap: duality_gap,
        });
    }
    let phi_prev = problem.phi(problem.theta_prev());
    let phi_new = problem.phi(&theta);
    let dissipation = problem.dissipation(&theta);
    let theta_prev_linf = problem.theta_prev().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let report = ThetaStepReport {
        iters: raw.iters,
        duality_gap,
        objective,
        dual_value,
        linf_in: theta_prev_linf,
        linf_out: theta.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        clamp_overshoot,
        dissipation,
        phi_prev,
        phi_new,
        energy_decrease: phi_prev - phi_new - dissipation,
    };
    Ok(ThetaStepOutput {
        theta: ScalarField::from_vec(*problem.grid(), theta)?,
        dual: raw.dual,
        report,
    })
}

/// Smoothed validator run, returning the raw minimiser of `P_μ`.
pub fn theta_step_smoothed(
    theta_prev: &ScalarField,
    w: &ScalarField,
    eta: &ScalarField,
    model: &ModelSpec,
    nu: f64,
    h: f64,
    mu: f64,
) -> Result<ScalarField, ThetaStepError> {
    if !(mu > 0.0) {
        return Err(ThetaStepError::InvalidParams(format!("mu must be positive, got {mu}")));
    }
    let problem = ThetaProblem::new(theta_prev, w, eta, model, nu, h)?;
    let out = smoothed::solve(&problem, problem.theta_prev(), &smoothed::SmoothedOptions { mu, ..Default::default() });
    if !out.converged {
        return Err(ThetaStepError::NoConvergence {
            solver: "smoothed".into(),
            iters: out.iters,
            gap: out.grad_norm,
        });
    }
    Ok(ScalarField::from_vec(*theta_prev.grid(), out.theta)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TMonotonicityReport {
    /// `max (θ_low_out - θ_high_out)⁺`.
    pub excess: f64,
    /// Largest gap of the two solves, for the slack budget.
    pub max_gap: f64,
}

/// Runs the step from two ordered starts sharing `v` and measures order
/// violations of the outputs.
#[allow(clippy::too_many_arguments)]
pub fn tmonotonicity_check(
    w: &ScalarField,
    eta: &ScalarField,
    theta_low: &ScalarField,
    theta_high: &ScalarField,
    model: &ModelSpec,
    nu: f64,
    params: &ThetaStepParams,
) -> Result<TMonotonicityReport, ThetaStepError> {
    let (low, rl) = theta_step(theta_low, w, eta, model, nu, params)?;
    let (high, rh) = theta_step(theta_high, w, eta, model, nu, params)?;
    let excess = low
        .values()
        .iter()
        .zip(high.values())
        .map(|(a, b)| (a - b).max(0.0))
        .fold(0.0, f64::max);
    Ok(TMonotonicityReport {
        excess,
        max_gap: rl.duality_gap.max(rh.duality_gap),
    })
}
