//! The time loop: an order-parameter step followed by an orientation step,
//! with per-step energy bookkeeping.

use thiserror::Error;

use crate::energy::{self, EnergyBreakdown};
use crate::grid::GridError;
use crate::model::{ModelSpec, ValidationReport};
use crate::state::PhaseState;
use crate::thetastep::{self, ThetaSolverRegistry, ThetaStepError, ThetaStepParams, ThetaStepReport};
use crate::vstep::{self, VStepError, VStepParams, VStepReport};

/// Safety factor applied to the raw threshold `1/max(2, 4L)`.
pub const H_STAR_MARGIN: f64 = 0.9;

/// The raw step threshold `1/max(2, 4L)`.
pub fn h_star_raw(c2_norm: f64) -> f64 {
    1.0 / f64::max(2.0, 4.0 * c2_norm)
}

/// `0.9 / max(2, 4L)` for the model's `C²` norm `L`.
pub fn h_star(model: &ModelSpec) -> f64 {
    h_star_from_norm(model.c2_norm())
}

pub fn h_star_from_norm(c2_norm: f64) -> f64 {
    H_STAR_MARGIN * h_star_raw(c2_norm)
}

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error("h = {h} is not below h* = {h_star}; pass the override to run outside the hypotheses")]
    HGate { h: f64, h_star: f64 },
    #[error("initial data rejected:\n{0}")]
    InvalidInitial(ValidationReport),
    #[error("invalid scheme parameter: {0}")]
    InvalidParams(String),
    #[error("step {step}: {source}")]
    VStep { step: usize, source: VStepError },
    #[error("step {step}: {source}")]
    ThetaStep { step: usize, source: ThetaStepError },
    #[error("step {step}: free energy is not finite")]
    InfiniteEnergy { step: usize },
    #[error("output sink failed at step {step}: {message}")]
    Sink { step: usize, message: String },
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeParams {
    pub h: f64,
    pub nu: f64,
    pub n_steps: usize,
    pub record_every: usize,
    pub vstep: VStepParams,
    pub thetastep: ThetaStepParams,
    /// Registry name of the orientation solver.
    pub theta_solver: String,
    /// Allow `h ≥ h*`; such runs are flagged as outside the hypotheses.
    pub override_h_gate: bool,
}

impl SchemeParams {
    /// Defaults for a grid: tolerances from [`VStepParams::for_grid`] and
    /// [`ThetaStepParams::new`], snapshots every step, hybrid orientation solver.
    pub fn new(h: f64, nu: f64, n_steps: usize, grid: &crate::grid::GridSpec) -> Self {
        Self {
            h,
            nu,
            n_steps,
            record_every: 1,
            vstep: VStepParams::for_grid(h, grid),
            thetastep: ThetaStepParams::new(h),
            theta_solver: "hybrid".into(),
            override_h_gate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub t: f64,
    pub v: VStepReport,
    pub theta: ThetaStepReport,
    pub energy: EnergyBreakdown,
    /// `(1/2h)‖v_i - v_{i-1}‖²`
    pub diss_v: f64,
    /// `(1/h)‖√α₀(v_i)(θ_i - θ_{i-1})‖²`
    pub diss_theta: f64,
    /// `diss_v + diss_theta + F(i) - F(i-1)`; nonpositive for an exact step.
    pub dissipation_excess: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub h: f64,
    /// Recorded states as `(step index, state)`; always includes step 0 and
    /// the final step.
    pub states: Vec<(usize, PhaseState)>,
    pub reports: Vec<StepReport>,
    /// Energy at every step, index 0 being the initial state.
    pub energies: Vec<EnergyBreakdown>,
    pub t_grid: Vec<f64>,
    pub outside_hypotheses: bool,
}

impl Trajectory {
    pub fn final_state(&self) -> &PhaseState {
        &self.states.last().expect("trajectory always holds the initial state").1
    }

    pub fn state_at(&self, step: usize) -> Option<&PhaseState> {
        self.states
            .binary_search_by_key(&step, |(i, _)| *i)
            .ok()
            .map(|k| &self.states[k].1)
    }

    pub fn n_steps(&self) -> usize {
        self.reports.len()
    }
}

/// Receives output while the scheme runs. Both hooks default to no-ops.
pub trait SchemeSink {
    fn on_step(&mut self, _report: &StepReport) -> Result<(), String> {
        Ok(())
    }

    fn on_snapshot(&mut self, _step: usize, _t: f64, _state: &PhaseState) -> Result<(), String> {
        Ok(())
    }
}

/// Sink that discards everything.
pub struct NullSink;

impl SchemeSink for NullSink {}

/// Initial-data conditions: `w ∈ [o*, ι*]`, `η ∈ [0, 1]`, `θ` finite.
pub fn validate_initial(state: &PhaseState, model: &ModelSpec, nu: f64) -> ValidationReport {
    let mut report = ValidationReport::default();
    let same = state.w.same_grid(&state.eta).is_ok() && state.w.same_grid(&state.theta).is_ok();
    report.push("one grid", same, state.grid().shape_label());
    let (lo, hi) = (model.o_star(), model.iota_star());
    let (wmin, wmax) = (state.w.min(), state.w.max());
    report.push(
        "w range",
        wmin >= lo && wmax <= hi,
        format!("w in [{wmin}, {wmax}], required [{lo}, {hi}]"),
    );
    let (emin, emax) = (state.eta.min(), state.eta.max());
    report.push(
        "eta range",
        emin >= 0.0 && emax <= 1.0,
        format!("eta in [{emin}, {emax}], required [0, 1]"),
    );
    let finite = state.theta.values().iter().all(|v| v.is_finite());
    report.push("theta finite", finite, format!("|theta|_inf = {}", state.theta.max_abs()));
    let gamma_ok = state.w.values().iter().all(|&w| model.potential().gamma(w).is_finite());
    report.push("gamma finite", gamma_ok, format!("nu = {nu}"));
    report
}

pub fn run(
    init: &PhaseState,
    model: &ModelSpec,
    params: &SchemeParams,
    sink: &mut dyn SchemeSink,
) -> Result<Trajectory, SchemeError> {
    run_with_registry(init, model, params, sink, &ThetaSolverRegistry::default())
}

pub fn run_with_registry(
    init: &PhaseState,
    model: &ModelSpec,
    params: &SchemeParams,
    sink: &mut dyn SchemeSink,
    solvers: &ThetaSolverRegistry,
) -> Result<Trajectory, SchemeError> {
    if params.n_steps == 0 || params.record_every == 0 {
        return Err(SchemeError::InvalidParams("n_steps and record_every must be at least 1".into()));
    }
    if !(params.nu >= 0.0 && params.nu.is_finite()) {
        return Err(SchemeError::InvalidParams(format!("nu must be nonnegative, got {}", params.nu)));
    }
    if params.vstep.h != params.h || params.thetastep.h != params.h {
        return Err(SchemeError::InvalidParams("sub-step parameters must share the scheme's h".into()));
    }
    let hs = h_star(model);
    let outside = !(params.h < hs);
    if outside && !params.override_h_gate {
        return Err(SchemeError::HGate { h: params.h, h_star: hs });
    }
    let validation = validate_initial(init, model, params.nu);
    if !validation.passed() {
        return Err(SchemeError::InvalidInitial(validation));
    }
    let solver = solvers
        .create(&params.theta_solver)
        .map_err(|source| SchemeError::ThetaStep { step: 0, source })?;

    let e0 = energy::free_energy(init, model, params.nu)?;
    if !e0.is_finite() {
        return Err(SchemeError::InfiniteEnergy { step: 0 });
    }
    let mut traj = Trajectory {
        h: params.h,
        states: vec![(0, init.clone())],
        reports: Vec::with_capacity(params.n_steps),
        energies: vec![e0],
        t_grid: vec![0.0],
        outside_hypotheses: outside,
    };
    sink.on_snapshot(0, 0.0, init)
        .map_err(|message| SchemeError::Sink { step: 0, message })?;

    let mut current = init.clone();
    let mut warm_dual: Option<Vec<Vec<f64>>> = None;
    for step in 1..=params.n_steps {
        let t = step as f64 * params.h;
        let v = vstep::v_step(&current.w, &current.eta, &current.theta, model, params.nu, &params.vstep)
            .map_err(|source| SchemeError::VStep { step, source })?;
        let th = thetastep::theta_step_with(
            solver.as_ref(),
            &current.theta,
            &v.w,
            &v.eta,
            model,
            params.nu,
            &params.thetastep,
            warm_dual.as_deref(),
        )
        .map_err(|source| SchemeError::ThetaStep { step, source })?;
        let next = PhaseState::new(v.w, v.eta, th.theta)?;
        let e = energy::free_energy(&next, model, params.nu)?;
        if !e.is_finite() {
            return Err(SchemeError::InfiniteEnergy { step });
        }
        let prev_total = traj.energies.last().map(|p| p.total).unwrap_or(e0.total);
        let report = StepReport {
            step,
            t,
            diss_v: v.report.dissipation,
            diss_theta: th.report.dissipation,
            dissipation_excess: v.report.dissipation + th.report.dissipation + e.total - prev_total,
            v: v.report,
            theta: th.report,
            energy: e,
        };
        sink.on_step(&report)
            .map_err(|message| SchemeError::Sink { step, message })?;
        if step % params.record_every == 0 || step == params.n_steps {
            sink.on_snapshot(step, t, &next)
                .map_err(|message| SchemeError::Sink { step, message })?;
            traj.states.push((step, next.clone()));
        }
        traj.reports.push(report);
        traj.energies.push(e);
        traj.t_grid.push(t);
        warm_dual = Some(th.dual);
        current = next;
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    /// Value at the right node of the containing interval.
    PiecewiseConstantRight,
    /// Value at the left node.
    PiecewiseConstantLeft,
    Linear,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InterpolationError {
    #[error("t = {t} outside [0, {end}]")]
    OutOfRange { t: f64, end: f64 },
    #[error("state at step {0} was not recorded")]
    NotRecorded(usize),
}

/// Evaluates one of the three time interpolants of a trajectory at `t`.
/// Needs the node states around `t` to have been recorded.
pub fn time_interpolate(traj: &Trajectory, t: f64, kind: Interpolation) -> Result<PhaseState, InterpolationError> {
    let n = traj.n_steps();
    let end = n as f64 * traj.h;
    if !(t >= 0.0 && t <= end) {
        return Err(InterpolationError::OutOfRange { t, end });
    }
    let s = t / traj.h;
    let left = (s.floor() as usize).min(n);
    let at_node = (s - left as f64).abs() <= 1e-12 * s.max(1.0);
    let fetch = |i: usize| traj.state_at(i).cloned().ok_or(InterpolationError::NotRecorded(i));
    if at_node {
        return fetch(left);
    }
    let right = left + 1;
    match kind {
        Interpolation::PiecewiseConstantRight => fetch(right),
        Interpolation::PiecewiseConstantLeft => fetch(left),
        Interpolation::Linear => {
            let (a, b) = (fetch(left)?, fetch(right)?);
            let lam = s - left as f64;
            let mix = |x: &crate::grid::ScalarField, y: &crate::grid::ScalarField| {
                let values = x.values().iter().zip(y.values()).map(|(p, q)| (1.0 - lam) * p + lam * q).collect();
                crate::grid::ScalarField::from_vec(*x.grid(), values).expect("convex combination of finite fields")
            };
            Ok(PhaseState {
                w: mix(&a.w, &b.w),
                eta: mix(&a.eta, &b.eta),
                theta: mix(&a.theta, &b.theta),
            })
        }
    }
}
