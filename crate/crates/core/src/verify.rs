//! Runnable checks of the scheme's invariants, and the `ν → 0` study.
//!
//! Every check returns a [`CheckResult`] whose `passed` flag is exactly
//! `worst_violation <= tolerance` (a `NaN` violation fails).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::energy;
use crate::grid::{self, GridSpec, ScalarField, VectorField};
use crate::init::{make_initial, InitKind};
use crate::model::{MobilitySpec, ModelSpec, PotentialSpec};
use crate::scheme::{self, NullSink, SchemeError, SchemeParams, Trajectory};
use crate::state::PhaseState;
use crate::thetastep::{self, oracle, HybridSolver, ThetaProblem, ThetaStepError, ThetaStepParams};
use crate::vstep::{self, VStepError, VStepParams};

/// Per-step slack, relative to `1 + |F|`.
pub const DISSIPATION_TOL: f64 = 1e-8;
pub const BOX_TOL: f64 = 1e-8;
pub const LINF_TOL: f64 = 1e-8;
pub const CONTRACTION_SLACK: f64 = 1e-6;
pub const ORACLE_TOL: f64 = 1e-6;
pub const ORACLE_GAP_TOL: f64 = 1e-8;
pub const ORDER_TOL: f64 = 1e-8;
pub const PERTURBATION_TOL: f64 = 2.0 + 1e-6;
pub const SANDWICH_TOL: f64 = 1e-12;
pub const DERIVATIVE_TOL: f64 = 1e-6;
pub const ADJOINT_TOL: f64 = 1e-13;
/// The last `ν` run must carry less than this fraction of the first run's
/// aggregated `ν`-Dirichlet term.
pub const NU_TREND_FACTOR: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub worst_violation: f64,
    pub tolerance: f64,
    pub context: String,
}

impl CheckResult {
    pub fn new(name: impl Into<String>, worst_violation: f64, tolerance: f64, context: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: worst_violation <= tolerance,
            worst_violation,
            tolerance,
            context: context.into(),
        }
    }

    /// Appends `extra` (e.g. a config digest) to the context.
    pub fn with_context(mut self, extra: &str) -> Self {
        if self.context.is_empty() {
            self.context = extra.to_string();
        } else {
            self.context = format!("{}; {extra}", self.context);
        }
        self
    }
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("invalid nu schedule: {0}")]
    InvalidSchedule(String),
    #[error("nu = {nu}: {source}")]
    Run { nu: f64, source: SchemeError },
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    VStep(#[from] VStepError),
    #[error(transparent)]
    ThetaStep(#[from] ThetaStepError),
    #[error(transparent)]
    Grid(#[from] grid::GridError),
}

/// The three potential settings of the benchmark matrix.
pub fn benchmark_models() -> Vec<(&'static str, ModelSpec)> {
    let build = |p: PotentialSpec, m: MobilitySpec| ModelSpec::new(p, m).expect("benchmark models are valid");
    vec![
        ("g1", build(PotentialSpec::standard("g1"), MobilitySpec::kobayashi(0.01))),
        (
            "g2",
            build(PotentialSpec::new("g2", 1.0, 0.0, 0.1, 0.9), MobilitySpec::constant(1.0, 1.0, 1.0)),
        ),
        ("g3", build(PotentialSpec::standard("g3"), MobilitySpec::kobayashi(0.01))),
    ]
}

fn rel(x: f64, scale: f64) -> f64 {
    x / (1.0 + scale.abs())
}

fn run_context(traj: &Trajectory) -> String {
    let grid = traj.final_state().grid().shape_label();
    format!("grid {grid}, h {}, {} steps", traj.h, traj.n_steps())
}

/// Strong per-step inequality, recomputed from the stored energies and
/// dissipation terms: `diss_v + diss_θ + F_i - F_{i-1} ≤ 1e-8 (1 + |F_{i-1}|)`.
/// The reported value is the largest relative excess, usually negative.
pub fn check_dissipation(traj: &Trajectory) -> CheckResult {
    let worst = traj
        .reports
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let (before, after) = (traj.energies[k].total, traj.energies[k + 1].total);
            rel(r.diss_v + r.diss_theta + after - before, before)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    CheckResult::new("dissipation", worst, DISSIPATION_TOL, run_context(traj))
}

/// `w ∈ [o*, ι*]`, `η ∈ [0, 1]` after every step and at every snapshot.
pub fn check_box(traj: &Trajectory, model: &ModelSpec) -> CheckResult {
    let steps = traj.reports.iter().map(|r| r.v.box_violation);
    let snaps = traj.states.iter().map(|(_, s)| vstep::box_violation(&s.w, &s.eta, model));
    let worst = steps.chain(snaps).fold(0.0, f64::max);
    CheckResult::new("box", worst, BOX_TOL, run_context(traj))
}

/// `|θ_i|_∞ ≤ |θ_{i-1}|_∞` per step, and every snapshot against the start.
pub fn check_linfty(traj: &Trajectory) -> CheckResult {
    let start = traj.states[0].1.theta.max_abs();
    let steps = traj.reports.iter().map(|r| r.theta.linf_out - r.theta.linf_in);
    let snaps = traj.states.iter().map(|(_, s)| s.theta.max_abs() - start);
    let worst = steps.chain(snaps).fold(0.0, f64::max);
    CheckResult::new("max_principle", worst, LINF_TOL, run_context(traj))
}

/// Summed dissipation plus the final energy against the initial energy,
/// relative to the accumulated per-step slack scale `Σ(1 + |F_{i-1}|)`.
pub fn check_telescoped(traj: &Trajectory) -> CheckResult {
    let diss: f64 = traj.reports.iter().map(|r| r.diss_v + r.diss_theta).sum();
    let scale: f64 = traj.energies[..traj.reports.len()].iter().map(|e| 1.0 + e.total.abs()).sum();
    let first = traj.energies[0].total;
    let last = traj.energies.last().map(|e| e.total).unwrap_or(first);
    let worst = ((diss + last - first) / scale.max(1.0)).max(0.0);
    CheckResult::new("telescoped_dissipation", worst, DISSIPATION_TOL, run_context(traj))
}

/// `|F_i| ≤ F* = |F_0| + |c*||Ω|` along the run.
pub fn check_energy_bound(traj: &Trajectory, model: &ModelSpec) -> CheckResult {
    let volume = traj.final_state().grid().volume();
    let bound = energy::energy_bound(&traj.energies[0], model, volume);
    let worst = traj
        .energies
        .iter()
        .map(|e| rel(e.total.abs() - bound, bound))
        .fold(0.0, f64::max);
    CheckResult::new("energy_bound", worst, DISSIPATION_TOL, format!("{}, F* {bound}", run_context(traj)))
}

/// `max_i ‖Δv_i‖ ≤ √h ‖∂_t v̂‖_{L²(L²)} = (Σ‖Δv_i‖²)^{1/2}`, with the
/// increments recovered from the stored `v` dissipation.
pub fn check_interpolation_gap(traj: &Trajectory) -> CheckResult {
    let sq: Vec<f64> = traj.reports.iter().map(|r| 2.0 * traj.h * r.diss_v).collect();
    let lhs = sq.iter().copied().fold(0.0, f64::max).sqrt();
    let rhs = sq.iter().sum::<f64>().sqrt();
    CheckResult::new("interpolation_gap", rel(lhs - rhs, rhs).max(0.0), SANDWICH_TOL, run_context(traj))
}

/// Largest measured fixed-point ratio against `h L (1 + 1e-6)`.
pub fn check_contraction(traj: &Trajectory, model: &ModelSpec) -> CheckResult {
    let worst = traj.reports.iter().map(|r| r.v.max_contraction_ratio()).fold(0.0, f64::max);
    let bound = traj.h * model.c2_norm() * (1.0 + CONTRACTION_SLACK);
    let measured = traj.reports.iter().filter(|r| !r.v.contraction_ratios.is_empty()).count();
    CheckResult::new(
        "contraction",
        worst,
        bound,
        format!("{}, {measured} steps with measurable ratios", run_context(traj)),
    )
}

/// Every check that only needs a finished trajectory.
pub fn trajectory_checks(traj: &Trajectory, model: &ModelSpec) -> Vec<CheckResult> {
    vec![
        check_dissipation(traj),
        check_box(traj, model),
        check_linfty(traj),
        check_telescoped(traj),
        check_energy_bound(traj, model),
        check_interpolation_gap(traj),
        check_contraction(traj, model),
    ]
}

/// Outcome of a run at a step size that may be outside the hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub h: f64,
    pub h_star: f64,
    /// `h L`
    pub guarantee: f64,
    /// Largest measured ratio; `NaN` if none could be measured.
    pub measured: f64,
    pub steps_completed: usize,
    pub outside_hypotheses: bool,
    /// Error that stopped the run early, if any.
    pub failure: Option<String>,
}

impl ProbeReport {
    pub fn exceeded(&self) -> bool {
        !(self.measured <= self.guarantee) || self.failure.is_some()
    }
}

/// Runs `n_steps` at `h` with the gate overridden and records the largest
/// contraction ratio. A step failure ends the probe and is recorded.
pub fn probe_contraction(init: &PhaseState, model: &ModelSpec, h: f64, nu: f64, n_steps: usize) -> ProbeReport {
    let grid = *init.grid();
    let mut params = SchemeParams::new(h, nu, 1, &grid);
    params.override_h_gate = true;
    let solver = HybridSolver;
    let mut state = init.clone();
    let mut measured = f64::NAN;
    let mut completed = 0;
    let mut failure = None;
    for _ in 0..n_steps {
        let v = match vstep::v_step(&state.w, &state.eta, &state.theta, model, nu, &params.vstep) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        };
        let r = v.report.max_contraction_ratio();
        if !v.report.contraction_ratios.is_empty() {
            measured = if measured.is_nan() { r } else { measured.max(r) };
        }
        let th = thetastep::theta_step_with(&solver, &state.theta, &v.w, &v.eta, model, nu, &params.thetastep, None);
        match th {
            Ok(th) => {
                state = PhaseState {
                    w: v.w,
                    eta: v.eta,
                    theta: th.theta,
                };
                completed += 1;
            }
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        }
    }
    let h_star = scheme::h_star(model);
    ProbeReport {
        h,
        h_star,
        guarantee: h * model.c2_norm(),
        measured,
        steps_completed: completed,
        outside_hypotheses: !(h < h_star),
        failure,
    }
}

/// `Φ₀ + ν δ₁ S ≤ Φ_ν ≤ Φ₀ + ν sup β S` with `S = Σ|∇θ|² dx^d` on random
/// fields with `(w, η) ∈ [0, 1]²`; violations relative to `|Φ_ν|`.
pub fn check_gamma_sandwich(model: &ModelSpec, grid: GridSpec, nu: f64, n_samples: usize, seed: u64) -> CheckResult {
    let bounds = model.mobility_bounds();
    let context = format!("{} nu {nu} grid {} seed {seed}", model.label(), grid.shape_label());
    if !(bounds.delta1 > 0.0) {
        return CheckResult::new("gamma_sandwich", f64::INFINITY, SANDWICH_TOL, format!("{context}: delta1 = 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n_samples {
        let w = random_field(grid, &mut rng, 0.0, 1.0);
        let eta = random_field(grid, &mut rng, 0.0, 1.0);
        let scale = rng.gen_range(0.1..3.0);
        let theta = random_field(grid, &mut rng, -scale, scale);
        let phi0 = energy::phi_nu(&w, &eta, &theta, model, 0.0).expect("one grid");
        let phi = energy::phi_nu(&w, &eta, &theta, model, nu).expect("one grid");
        let s = energy::gradient_square_sum(&theta);
        let lower = phi0 + nu * bounds.delta1 * s;
        let upper = phi0 + nu * bounds.beta_sup * s;
        let denom = phi.abs().max(f64::MIN_POSITIVE);
        worst = worst.max((lower - phi) / denom).max((phi - upper) / denom);
    }
    CheckResult::new("gamma_sandwich", worst, SANDWICH_TOL, context)
}

fn random_field(grid: GridSpec, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> ScalarField {
    let values = (0..grid.len()).map(|_| rng.gen_range(lo..=hi)).collect();
    ScalarField::from_vec(grid, values).expect("finite samples")
}

/// Solver parameters for the small oracle instances.
fn oracle_params(h: f64) -> ThetaStepParams {
    ThetaStepParams {
        gap_tol: 1e-12,
        max_iters: 1_000_000,
        ..ThetaStepParams::new(h)
    }
}

/// The orientation step against the independent small-grid oracle on
/// `n_instances` random problems for each of `ν = 0` and `ν = 0.1`.
/// Returns the objective agreement and the gap at termination.
pub fn check_theta_oracle(n_instances: usize, seed: u64) -> Result<Vec<CheckResult>, VerifyError> {
    let models = benchmark_models();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grids = [
        GridSpec::line(16, 1.0)?,
        GridSpec::plane(4, 4, 1.0)?,
        GridSpec::line(64, 0.5)?,
        GridSpec::plane(8, 8, 1.0)?,
    ];
    let mut worst_obj: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    for nu in [0.0, 0.1] {
        for k in 0..n_instances {
            let (_, model) = &models[k % models.len()];
            let grid = grids[k % grids.len()];
            let h = 0.5 * scheme::h_star(model);
            let (lo, hi) = (model.o_star(), model.iota_star());
            let w = random_field(grid, &mut rng, lo, hi);
            let eta = random_field(grid, &mut rng, 0.0, 1.0);
            let theta_prev = if rng.gen_bool(0.5) {
                random_field(grid, &mut rng, -1.0, 1.0)
            } else {
                crate::init::make_grains(grid, rng.gen(), 3, 1.0, model).theta
            };
            let problem = ThetaProblem::new(&theta_prev, &w, &eta, model, nu, h)?;
            let out = thetastep::solve_problem(&HybridSolver, &problem, &oracle_params(h), None)?;
            let reference = oracle::minimise(&problem).objective;
            worst_obj = worst_obj.max((out.report.objective - reference).abs() / (1.0 + reference.abs()));
            worst_gap = worst_gap.max(out.report.duality_gap);
        }
    }
    let context = format!("{n_instances} instances per nu in {{0, 0.1}}, <= 64 cells, seed {seed}");
    Ok(vec![
        CheckResult::new("theta_oracle", worst_obj, ORACLE_TOL, context.clone()),
        CheckResult::new("theta_gap", worst_gap, ORACLE_GAP_TOL, context),
    ])
}

/// Order preservation and weighted nonexpansiveness of the orientation step
/// on `n_pairs` ordered pairs sharing a random `v`.
pub fn check_tmonotonicity(
    model: &ModelSpec,
    grid: GridSpec,
    nu: f64,
    n_pairs: usize,
    seed: u64,
    params: &ThetaStepParams,
) -> Result<Vec<CheckResult>, VerifyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_order: f64 = 0.0;
    let mut worst_contraction: f64 = 0.0;
    for k in 0..n_pairs {
        let base = make_initial(grid, InitKind::Random, rng.gen(), 1.0, model);
        let low = make_initial(grid, InitKind::Random, rng.gen(), 1.0, model).theta;
        let other = make_initial(grid, InitKind::Random, rng.gen(), 1.0, model).theta;
        let shift = rng.gen_range(0.0..0.5);
        // Alternate between a lattice maximum, which touches `low` on a
        // region, and a strictly separated upward perturbation.
        let high: Vec<f64> = low
            .values()
            .iter()
            .zip(other.values())
            .map(|(l, o)| if k % 2 == 0 { l.max(*o) } else { l + shift + 0.25 * (1.0 + o) })
            .collect();
        let high = ScalarField::from_vec(grid, high)?;
        let p_low = ThetaProblem::new(&low, &base.w, &base.eta, model, nu, params.h)?;
        let p_high = ThetaProblem::new(&high, &base.w, &base.eta, model, nu, params.h)?;
        let a = thetastep::solve_problem(&HybridSolver, &p_low, params, None)?;
        let b = thetastep::solve_problem(&HybridSolver, &p_high, params, None)?;
        let (ta, tb) = (a.theta.values(), b.theta.values());
        let excess = ta.iter().zip(tb).map(|(x, y)| (x - y).max(0.0)).fold(0.0, f64::max);
        worst_order = worst_order.max(excess);
        let after = p_low.weighted_distance(ta, tb);
        let before = p_low.weighted_distance(low.values(), high.values());
        worst_contraction = worst_contraction.max(after - before);
    }
    let context = format!("{} nu {nu} grid {} seed {seed}", model.label(), grid.shape_label());
    Ok(vec![
        CheckResult::new("t_monotonicity", worst_order, ORDER_TOL, context.clone()),
        CheckResult::new("theta_nonexpansive", worst_contraction, ORDER_TOL, context),
    ])
}

/// `‖v₁ - v₂‖² ≤ 2‖v₀,₁ - v₀,₂‖²` for `n_pairs` starts perturbed by `1e-3`.
pub fn check_perturbation(
    model: &ModelSpec,
    grid: GridSpec,
    nu: f64,
    n_pairs: usize,
    seed: u64,
    params: &VStepParams,
) -> Result<CheckResult, VerifyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (model.o_star(), model.iota_star());
    let mut worst: f64 = 0.0;
    for _ in 0..n_pairs {
        let base = make_initial(grid, InitKind::Random, rng.gen(), 1.0, model);
        let mut nudge = |f: &ScalarField, a: f64, b: f64| {
            let values = f.values().iter().map(|v| (v + 1e-3 * rng.gen_range(-1.0..=1.0)).clamp(a, b)).collect();
            ScalarField::from_vec(grid, values)
        };
        let w2 = nudge(&base.w, lo, hi)?;
        let eta2 = nudge(&base.eta, 0.0, 1.0)?;
        let one = vstep::v_step(&base.w, &base.eta, &base.theta, model, nu, params)?;
        let two = vstep::v_step(&w2, &eta2, &base.theta, model, nu, params)?;
        worst = worst.max(vstep::v_step_perturbation_bound((&base.w, &base.eta), (&w2, &eta2), &one, &two));
    }
    Ok(CheckResult::new(
        "perturbation",
        worst,
        PERTURBATION_TOL,
        format!("{} nu {nu} grid {} h {} seed {seed}", model.label(), grid.shape_label(), params.h),
    ))
}

fn central(f: impl Fn(f64) -> f64, x: f64, step: f64) -> f64 {
    (f(x + step) - f(x - step)) / (2.0 * step)
}

/// `∇g`, the Hessian of `g`, `∇α` and `∇β` against central differences at
/// `n_points` random points of `[0, 1]²`; errors relative to `max(1, |exact|)`.
pub fn check_derivatives(model: &ModelSpec, n_points: usize, seed: u64) -> CheckResult {
    const STEP: f64 = 1e-6;
    let pot = model.potential();
    let mob = model.mobility();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut record = |exact: f64, approx: f64| worst = worst.max((exact - approx).abs() / exact.abs().max(1.0));
    for _ in 0..n_points {
        let (w, eta): (f64, f64) = (rng.gen(), rng.gen());
        let grad = pot.grad_g(w, eta);
        record(grad[0], central(|x| pot.g(x, eta), w, STEP));
        record(grad[1], central(|y| pot.g(w, y), eta, STEP));
        let hess = pot.hess_g(w, eta);
        for k in 0..2 {
            record(hess[k][0], central(|x| pot.grad_g(x, eta)[k], w, STEP));
            record(hess[k][1], central(|y| pot.grad_g(w, y)[k], eta, STEP));
        }
        let m = mob.eval(w, eta);
        record(m.grad_a[0], central(|x| mob.eval(x, eta).a, w, STEP));
        record(m.grad_a[1], central(|y| mob.eval(w, y).a, eta, STEP));
        record(m.grad_b[0], central(|x| mob.eval(x, eta).b, w, STEP));
        record(m.grad_b[1], central(|y| mob.eval(w, y).b, eta, STEP));
    }
    CheckResult::new(
        "derivatives",
        worst,
        DERIVATIVE_TOL,
        format!("{} {n_points} points seed {seed}", model.label()),
    )
}

/// Discrete adjointness `⟨∇f, p⟩ = -⟨f, div p⟩` and symmetry of the
/// Neumann Laplacian, both relative to the sizes of the products.
pub fn check_adjointness(grid: GridSpec, n_samples: usize, seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adj: f64 = 0.0;
    let mut sym: f64 = 0.0;
    for _ in 0..n_samples {
        let f = random_field(grid, &mut rng, -1.0, 1.0);
        let g = random_field(grid, &mut rng, -1.0, 1.0);
        let comps = (0..grid.dim())
            .map(|_| (0..grid.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect())
            .collect();
        let p = VectorField::from_components(grid, comps).expect("matching lengths");
        let gf = grid::gradient(&f);
        let dp = grid::divergence(&p);
        let scale = gf.inner(&gf).sqrt() * p.inner(&p).sqrt() + f.l2_norm() * dp.l2_norm();
        adj = adj.max((gf.inner(&p) + f.inner(&dp)).abs() / scale);
        let (lf, lg) = (grid::neumann_laplacian(&f), grid::neumann_laplacian(&g));
        let scale = lf.l2_norm() * g.l2_norm() + f.l2_norm() * lg.l2_norm();
        sym = sym.max((lf.inner(&g) - f.inner(&lg)).abs() / scale);
    }
    let context = format!("grid {} {n_samples} samples seed {seed}", grid.shape_label());
    vec![
        CheckResult::new("adjointness", adj, ADJOINT_TOL, context.clone()),
        CheckResult::new("laplacian_symmetry", sym, ADJOINT_TOL, context),
    ]
}

/// Number of differing bit patterns between two runs of the same input.
pub fn check_determinism(init: &PhaseState, model: &ModelSpec, params: &SchemeParams) -> Result<CheckResult, VerifyError> {
    let a = scheme::run(init, model, params, &mut NullSink)?;
    let b = scheme::run(init, model, params, &mut NullSink)?;
    Ok(CheckResult::new(
        "determinism",
        trajectory_bit_mismatches(&a, &b) as f64,
        0.0,
        format!("{} nu {} {} steps", model.label(), params.nu, params.n_steps),
    ))
}

/// Count of values whose bits differ, over energies, dissipation terms and
/// recorded fields. Trajectories of different shape count as one mismatch
/// per missing entry.
pub fn trajectory_bit_mismatches(a: &Trajectory, b: &Trajectory) -> usize {
    fn count(x: impl Iterator<Item = f64>, y: impl Iterator<Item = f64>) -> usize {
        let (x, y): (Vec<f64>, Vec<f64>) = (x.collect(), y.collect());
        let diff = x.iter().zip(&y).filter(|(p, q)| p.to_bits() != q.to_bits()).count();
        diff + x.len().abs_diff(y.len())
    }
    let energies = |t: &Trajectory| {
        t.energies
            .iter()
            .flat_map(|e| [e.dirichlet_v, e.gamma_term, e.g_term, e.wtv_term, e.nu_dirichlet_term, e.total])
            .collect::<Vec<_>>()
            .into_iter()
    };
    let steps = |t: &Trajectory| {
        t.reports
            .iter()
            .flat_map(|r| [r.diss_v, r.diss_theta, r.theta.duality_gap])
            .collect::<Vec<_>>()
            .into_iter()
    };
    let fields = |t: &Trajectory| {
        t.states
            .iter()
            .flat_map(|(_, s)| [&s.w, &s.eta, &s.theta].into_iter().flat_map(|f| f.values().to_vec()))
            .collect::<Vec<_>>()
            .into_iter()
    };
    count(energies(a), energies(b)) + count(steps(a), steps(b)) + count(fields(a), fields(b))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NuRun {
    pub nu: f64,
    /// `Σ_i h ν Σβ|∇θ_i|² dx^d` over the run.
    pub nu_aggregate: f64,
    /// `Σ_i h ∫α|∇θ_i|` over the run.
    pub wtv_aggregate: f64,
    pub final_energy: f64,
    pub dissipation_passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub runs: Vec<NuRun>,
    /// Last aggregate over first; `0` for a single run.
    pub ratio: f64,
    pub check: CheckResult,
}

/// Runs the scheme once per `ν` (in parallel; each run is sequential and
/// deterministic) and compares the aggregated `ν`-Dirichlet terms.
pub fn nu_limit_study(
    init: &PhaseState,
    model: &ModelSpec,
    schedule: &[f64],
    h: f64,
    n_steps: usize,
) -> Result<StudyReport, VerifyError> {
    if schedule.is_empty() {
        return Err(VerifyError::InvalidSchedule("empty".into()));
    }
    if schedule.iter().any(|&nu| !(nu >= 0.0 && nu.is_finite())) {
        return Err(VerifyError::InvalidSchedule("entries must be finite and nonnegative".into()));
    }
    if schedule.windows(2).any(|p| !(p[1] < p[0])) {
        return Err(VerifyError::InvalidSchedule("entries must be strictly decreasing".into()));
    }
    let grid = *init.grid();
    let runs: Vec<NuRun> = schedule
        .par_iter()
        .map(|&nu| {
            let params = SchemeParams::new(h, nu, n_steps, &grid);
            let traj = scheme::run(init, model, &params, &mut NullSink).map_err(|source| VerifyError::Run { nu, source })?;
            Ok(NuRun {
                nu,
                nu_aggregate: traj.energies[1..].iter().map(|e| h * e.nu_dirichlet_term).sum(),
                wtv_aggregate: traj.energies[1..].iter().map(|e| h * e.wtv_term).sum(),
                final_energy: traj.energies.last().map(|e| e.total).unwrap_or(f64::NAN),
                dissipation_passed: check_dissipation(&traj).passed,
            })
        })
        .collect::<Result<_, VerifyError>>()?;
    let first = runs[0].nu_aggregate;
    let last = runs[runs.len() - 1].nu_aggregate;
    let ratio = if runs.len() == 1 {
        0.0
    } else if first > 0.0 {
        last / first
    } else if last == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let check = CheckResult::new(
        "nu_limit_trend",
        ratio,
        NU_TREND_FACTOR,
        format!("{} nu {:?}, {n_steps} steps of h {h}", model.label(), schedule),
    );
    Ok(StudyReport { runs, ratio, check })
}

/// `2^-1, …, 2^-k`.
pub fn halving_schedule(k: u32) -> Vec<f64> {
    (1..=k as i32).map(|j| 2f64.powi(-j)).collect()
}
