//! The four batch commands. Each returns whether everything it checked
//! passed; errors are configuration, run or output failures.

use std::path::{Path, PathBuf};

use grainflow::scheme::{self, NullSink, SchemeError};
use grainflow::verify::{self, CheckResult, VerifyError};
use thiserror::Error;

use crate::config::{ConfigError, Resolved, RunConfig};
use crate::output::{self, FileSink, OutputError};

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Output(#[from] OutputError),
}

/// Where a command writes and which overrides apply.
#[derive(Debug, Clone, Default)]
pub struct Invocation {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub override_h_gate: bool,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub passed: bool,
    pub files: Vec<PathBuf>,
    pub checks: Vec<CheckResult>,
    pub summary: String,
}

fn out_dir(cfg: &RunConfig, inv: &Invocation) -> PathBuf {
    inv.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.directory))
}

fn prepare(cfg: &RunConfig, inv: &Invocation) -> Result<(Resolved, PathBuf), CommandError> {
    let resolved = cfg.resolve(inv.seed, inv.override_h_gate)?;
    let dir = out_dir(cfg, inv);
    std::fs::create_dir_all(&dir).map_err(|source| OutputError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    Ok((resolved, dir))
}

/// Runs the scheme, writing `energy.csv` and snapshots.
pub fn run(cfg: &RunConfig, inv: &Invocation) -> Result<Outcome, CommandError> {
    let (r, dir) = prepare(cfg, inv)?;
    let mut sink = FileSink::create(&dir, &r.digest, r.seed, &cfg.output.formats, &r.init, &r.model, r.params.nu)?;
    let traj = scheme::run(&r.init, &r.model, &r.params, &mut sink)?;
    let files = sink.finish()?;
    let last = traj.energies.last().map(|e| e.total).unwrap_or(f64::NAN);
    let flag = if traj.outside_hypotheses { " (outside hypotheses: h >= h*)" } else { "" };
    Ok(Outcome {
        passed: true,
        files,
        checks: Vec::new(),
        summary: format!(
            "{} steps of h = {} on {}, final energy {last}{flag}",
            traj.n_steps(),
            traj.h,
            r.grid.shape_label()
        ),
    })
}

/// The check suite for one config; writes `checks.csv`.
pub fn verify(cfg: &RunConfig, inv: &Invocation) -> Result<Outcome, CommandError> {
    let (r, dir) = prepare(cfg, inv)?;
    let v = &cfg.verify;
    let traj = scheme::run(&r.init, &r.model, &r.params, &mut NullSink)?;
    let again = scheme::run(&r.init, &r.model, &r.params, &mut NullSink)?;
    let mut checks = verify::trajectory_checks(&traj, &r.model);
    checks.push(CheckResult::new(
        "determinism",
        verify::trajectory_bit_mismatches(&traj, &again) as f64,
        0.0,
        format!("{} steps", traj.n_steps()),
    ));
    let sandwich_nu = if r.params.nu > 0.0 { r.params.nu } else { 0.1 };
    if r.model.mobility_bounds().delta1 > 0.0 {
        checks.push(verify::check_gamma_sandwich(&r.model, r.grid, sandwich_nu, v.sandwich_samples, r.seed));
    }
    checks.push(verify::check_derivatives(&r.model, 1000, r.seed));
    checks.extend(verify::check_adjointness(r.grid, 20, r.seed));
    if v.oracle_instances > 0 {
        checks.extend(verify::check_theta_oracle(v.oracle_instances, r.seed)?);
    }
    if v.order_pairs > 0 {
        checks.extend(verify::check_tmonotonicity(
            &r.model,
            r.grid,
            r.params.nu,
            v.order_pairs,
            r.seed,
            &r.params.thetastep,
        )?);
    }
    if v.perturbation_pairs > 0 {
        checks.push(verify::check_perturbation(
            &r.model,
            r.grid,
            r.params.nu,
            v.perturbation_pairs,
            r.seed,
            &r.params.vstep,
        )?);
    }
    let checks: Vec<CheckResult> = checks
        .into_iter()
        .map(|c| c.with_context(&format!("digest {} seed {}", r.digest, r.seed)))
        .collect();
    let path = dir.join("checks.csv");
    output::write_checks_csv(&path, &checks, &r.digest, r.seed)?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    Ok(Outcome {
        passed: failed == 0,
        files: vec![path],
        summary: format!("{} checks, {failed} failed", checks.len()),
        checks,
    })
}

/// The `ν → 0` study over `[sweep] nu`; writes `sweep.csv` and `checks.csv`.
pub fn sweep_nu(cfg: &RunConfig, inv: &Invocation) -> Result<Outcome, CommandError> {
    let (r, dir) = prepare(cfg, inv)?;
    let schedule = cfg.sweep.nu.clone().unwrap_or_else(|| verify::halving_schedule(8));
    let study = verify::nu_limit_study(&r.init, &r.model, &schedule, r.params.h, r.params.n_steps)?;
    let sweep_path = dir.join("sweep.csv");
    output::write_rows(&sweep_path, &r.digest, r.seed, &study.runs)?;
    let mut checks = vec![study.check.clone()];
    let worst = study.runs.iter().filter(|run| !run.dissipation_passed).count();
    checks.push(CheckResult::new(
        "sweep_dissipation",
        worst as f64,
        0.0,
        "runs failing the per-step dissipation check",
    ));
    let checks: Vec<CheckResult> = checks
        .into_iter()
        .map(|c| c.with_context(&format!("digest {} seed {}", r.digest, r.seed)))
        .collect();
    let checks_path = dir.join("checks.csv");
    output::write_checks_csv(&checks_path, &checks, &r.digest, r.seed)?;
    Ok(Outcome {
        passed: checks.iter().all(|c| c.passed),
        files: vec![sweep_path, checks_path],
        summary: format!("{} runs, last/first nu aggregate {:e}", study.runs.len(), study.ratio),
        checks,
    })
}

/// Contraction ratios at the configured `h`, which may lie beyond `h*`
/// with the override. Within the hypotheses exceeding `h L` is a failure;
/// beyond them the result is recorded and flagged.
pub fn probe_contraction(cfg: &RunConfig, inv: &Invocation) -> Result<Outcome, CommandError> {
    let (r, dir) = prepare(cfg, inv)?;
    let steps = cfg.verify.probe_steps.min(r.params.n_steps).max(1);
    let probe = verify::probe_contraction(&r.init, &r.model, r.params.h, r.params.nu, steps);
    let path = dir.join("probe.csv");
    output::write_rows(&path, &r.digest, r.seed, std::slice::from_ref(&probe))?;
    let flag = if probe.outside_hypotheses { "outside hypotheses" } else { "within hypotheses" };
    let verdict = if probe.exceeded() { "exceeds" } else { "within" };
    Ok(Outcome {
        passed: probe.outside_hypotheses || !probe.exceeded(),
        files: vec![path],
        checks: Vec::new(),
        summary: format!(
            "h = {} ({flag}, h* = {}): measured ratio {} {verdict} guarantee h L = {}{}",
            probe.h,
            probe.h_star,
            probe.measured,
            probe.guarantee,
            probe.failure.as_deref().map(|f| format!("; stopped: {f}")).unwrap_or_default()
        ),
    })
}

/// Loads the config at `path` and dispatches.
pub fn load(path: &Path) -> Result<RunConfig, CommandError> {
    Ok(RunConfig::load(path)?)
}
