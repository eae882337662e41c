use grainflow::init::{make_initial, InitKind};
use grainflow::scheme::{h_star, run, NullSink, SchemeParams, Trajectory};
use grainflow::thetastep::ThetaStepParams;
use grainflow::verify::*;
use grainflow::{GridSpec, ModelSpec, ScalarField};

fn g1() -> ModelSpec {
    benchmark_models().remove(0).1
}

fn short_run(model: &ModelSpec, n: usize) -> Trajectory {
    let grid = GridSpec::line(32, 1.0).unwrap();
    let init = make_initial(grid, InitKind::Random, 12, 1.0, model);
    run(&init, model, &SchemeParams::new(0.5 * h_star(model), 0.1, n, &grid), &mut NullSink).unwrap()
}

#[test]
fn check_result_passes_exactly_at_the_tolerance() {
    assert!(CheckResult::new("x", 1e-8, 1e-8, "").passed);
    assert!(!CheckResult::new("x", 1.1e-8, 1e-8, "").passed);
    assert!(!CheckResult::new("x", f64::NAN, 1e-8, "").passed);
    let c = CheckResult::new("x", 0.0, 1.0, "a").with_context("b");
    assert_eq!(c.context, "a; b");
    assert_eq!(CheckResult::new("x", 0.0, 1.0, "").with_context("b").context, "b");
}

#[test]
fn honest_trajectory_passes_everything() {
    let model = g1();
    let traj = short_run(&model, 10);
    for c in trajectory_checks(&traj, &model) {
        assert!(c.passed, "{c:?}");
    }
}

#[test]
fn raised_energy_fails_the_dissipation_checks() {
    let model = g1();
    let mut traj = short_run(&model, 10);
    traj.energies[5].total = traj.energies[4].total + 1e-3;
    assert!(!check_dissipation(&traj).passed);
    let mut traj = short_run(&model, 10);
    traj.energies[10].total = traj.energies[0].total + 1e-3;
    assert!(!check_telescoped(&traj).passed);
}

#[test]
fn corrupted_states_fail_box_and_max_principle() {
    let model = g1();
    let mut traj = short_run(&model, 4);
    let grid = *traj.final_state().grid();
    let last = traj.states.len() - 1;
    traj.states[last].1.eta = ScalarField::constant(grid, 1.01);
    assert!(!check_box(&traj, &model).passed);
    let mut traj = short_run(&model, 4);
    traj.states[last].1.theta = ScalarField::constant(grid, 5.0);
    assert!(!check_linfty(&traj).passed);
}

#[test]
fn inflated_ratio_fails_contraction() {
    let model = g1();
    let mut traj = short_run(&model, 3);
    let bound = traj.h * model.c2_norm();
    traj.reports[1].v.contraction_ratios.push(1.01 * bound);
    assert!(!check_contraction(&traj, &model).passed);
}

#[test]
fn energy_bound_catches_growth() {
    let model = g1();
    let mut traj = short_run(&model, 3);
    traj.energies[2].total = 1e6;
    assert!(!check_energy_bound(&traj, &model).passed);
}

#[test]
fn probe_beyond_the_gate_is_flagged() {
    let model = g1();
    let grid = GridSpec::line(64, 1.0).unwrap();
    let init = make_initial(grid, InitKind::Random, 1, 1.0, &model);
    let inside = probe_contraction(&init, &model, 0.5 * h_star(&model), 0.1, 5);
    assert!(!inside.outside_hypotheses && !inside.exceeded(), "{inside:?}");
    let beyond = probe_contraction(&init, &model, 2.0 * h_star(&model), 0.1, 5);
    assert!(beyond.outside_hypotheses);
    assert_eq!(beyond.guarantee, beyond.h * model.c2_norm());
}

#[test]
fn small_checks_pass_on_benchmark_models() {
    for (name, model) in benchmark_models() {
        let d = check_derivatives(&model, 200, 3);
        assert!(d.passed, "{name}: {d:?}");
        if model.mobility_bounds().delta1 > 0.0 {
            let s = check_gamma_sandwich(&model, GridSpec::plane(6, 6, 1.0).unwrap(), 0.1, 20, 3);
            assert!(s.passed, "{name}: {s:?}");
        }
    }
    for grid in [GridSpec::line(17, 0.3).unwrap(), GridSpec::plane(5, 7, 2.0).unwrap()] {
        for c in check_adjointness(grid, 10, 1) {
            assert!(c.passed, "{c:?}");
        }
    }
}

#[test]
fn order_checks_on_a_line() {
    let model = g1();
    let grid = GridSpec::line(24, 1.0).unwrap();
    let h = 0.5 * h_star(&model);
    let params = ThetaStepParams {
        gap_tol: 1e-12,
        max_iters: 1_000_000,
        ..ThetaStepParams::new(h)
    };
    for c in check_tmonotonicity(&model, grid, 0.1, 4, 2, &params).unwrap() {
        assert!(c.passed, "{c:?}");
    }
    let p = check_perturbation(&model, grid, 0.1, 3, 2, &grainflow::vstep::VStepParams::for_grid(h, &grid)).unwrap();
    assert!(p.passed, "{p:?}");
}

#[test]
fn oracle_check_on_a_few_instances() {
    let checks = check_theta_oracle(2, 7).unwrap();
    assert_eq!(checks.len(), 2);
    for c in checks {
        assert!(c.passed, "{c:?}");
    }
}

#[test]
fn determinism_counts_differences() {
    let model = g1();
    let a = short_run(&model, 3);
    let b = short_run(&model, 3);
    assert_eq!(trajectory_bit_mismatches(&a, &b), 0);
    let mut c = short_run(&model, 3);
    c.energies[1].g_term = f64::from_bits(c.energies[1].g_term.to_bits() ^ 1);
    assert_eq!(trajectory_bit_mismatches(&a, &c), 1);
    let shorter = short_run(&model, 2);
    assert!(trajectory_bit_mismatches(&a, &shorter) > 0);
    let grid = GridSpec::line(32, 1.0).unwrap();
    let init = make_initial(grid, InitKind::Random, 12, 1.0, &model);
    let params = SchemeParams::new(0.5 * h_star(&model), 0.1, 2, &grid);
    assert!(check_determinism(&init, &model, &params).unwrap().passed);
}

#[test]
fn nu_study_trend_and_schedule_errors() {
    assert_eq!(halving_schedule(3), [0.5, 0.25, 0.125]);
    let model = g1();
    let grid = GridSpec::line(64, 1.0).unwrap();
    let init = make_initial(grid, InitKind::Random, 7, 1.0, &model);
    let h = 0.5 * h_star(&model);
    let study = nu_limit_study(&init, &model, &halving_schedule(8), h, 20).unwrap();
    assert_eq!(study.runs.len(), 8);
    assert!(study.check.passed, "{:?}", study.check);
    assert!(study.runs.iter().all(|r| r.dissipation_passed));
    assert!(study.runs.windows(2).all(|p| p[1].nu_aggregate < p[0].nu_aggregate));
    for bad in [vec![], vec![0.1, 0.2], vec![0.1, 0.1], vec![-0.1]] {
        assert!(matches!(nu_limit_study(&init, &model, &bad, h, 2), Err(VerifyError::InvalidSchedule(_))));
    }
}
