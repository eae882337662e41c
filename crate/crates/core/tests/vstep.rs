use grainflow::init::{make_initial, InitKind};
use grainflow::scheme::h_star;
use grainflow::verify::benchmark_models;
use grainflow::vstep::{box_violation, frozen_objective, v_step, v_step_perturbation_bound, VStepError, VStepParams};
use grainflow::{GridSpec, ModelSpec, PhaseState, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params(model: &ModelSpec, grid: &GridSpec, frac: f64) -> VStepParams {
    VStepParams::for_grid(frac * h_star(model), grid)
}

/// Neumann Laplacian on a line, written out directly.
fn laplacian_1d(f: &[f64], dx: f64) -> Vec<f64> {
    let n = f.len();
    (0..n)
        .map(|i| {
            let left = if i > 0 { f[i - 1] - f[i] } else { 0.0 };
            let right = if i + 1 < n { f[i + 1] - f[i] } else { 0.0 };
            (left + right) / (dx * dx)
        })
        .collect()
}

/// Proximal gradient on the full (not frozen) objective
/// `(1/2h)‖v - v_prev‖² + ½‖∇v‖² + Γ(w) + ∫g(v)` for constant mobilities and
/// flat `θ`. For `h L < 1` it is strongly convex, so the minimiser is unique.
fn full_objective_minimiser(model: &ModelSpec, w0: &[f64], e0: &[f64], dx: f64, h: f64) -> (Vec<f64>, Vec<f64>) {
    let pot = model.potential();
    let t = 1.0 / (1.0 / h + 4.0 / (dx * dx) + model.c2_norm());
    let (mut w, mut e) = (w0.to_vec(), e0.to_vec());
    for _ in 0..2_000_000 {
        let (lw, le) = (laplacian_1d(&w, dx), laplacian_1d(&e, dx));
        let mut change: f64 = 0.0;
        for i in 0..w.len() {
            let grad = pot.grad_g(w[i].clamp(0.0, 1.0), e[i].clamp(0.0, 1.0));
            let gw = (w[i] - w0[i]) / h - lw[i] + grad[0];
            let ge = (e[i] - e0[i]) / h - le[i] + grad[1];
            let nw = pot.gamma_prox(t, w[i] - t * gw);
            let ne = e[i] - t * ge;
            change = change.max((nw - w[i]).abs()).max((ne - e[i]).abs());
            w[i] = nw;
            e[i] = ne;
        }
        if change < 1e-15 {
            break;
        }
    }
    (w, e)
}

/// Upper well of g2 with `c = 1, u = 0`: the root in `(½, 1)` of
/// `½ ln(w / (1 - w)) = w - ½`, with `η = w`.
fn logarithmic_well() -> f64 {
    let f = |w: f64| 0.5 * (w / (1.0 - w)).ln() - (w - 0.5);
    let (mut lo, mut hi) = (0.5 + 1e-9, 1.0 - 1e-15);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn well_bottom_is_stationary() {
    for (name, model) in benchmark_models() {
        let grid = GridSpec::plane(8, 8, 1.0).unwrap();
        let state = if name == "g2" {
            let w = logarithmic_well();
            PhaseState::constant(grid, w, w, 0.0)
        } else {
            make_initial(grid, InitKind::Wells, 0, 1.0, &model)
        };
        let out = v_step(&state.w, &state.eta, &state.theta, &model, 0.1, &params(&model, &grid, 0.5)).unwrap();
        let moved = out.w.values().iter().zip(state.w.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let moved_eta = out.eta.values().iter().zip(state.eta.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(moved.max(moved_eta) <= 1e-10, "{name}: moved {moved} {moved_eta}");
    }
}

#[test]
fn matches_full_problem_for_constant_mobility() {
    let model = benchmark_models().remove(1).1;
    let grid = GridSpec::line(32, 1.0).unwrap();
    for seed in 0..3 {
        let state = make_initial(grid, InitKind::Random, seed, 1.0, &model);
        let flat = ScalarField::zeros(grid);
        let p = params(&model, &grid, 0.5);
        let out = v_step(&state.w, &state.eta, &flat, &model, 0.1, &p).unwrap();
        let (w, e) = full_objective_minimiser(&model, state.w.values(), state.eta.values(), grid.dx(), p.h);
        let sq: f64 = out
            .w
            .values()
            .iter()
            .zip(&w)
            .chain(out.eta.values().iter().zip(&e))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let dist = (sq * grid.cell_volume()).sqrt();
        assert!(dist <= 1e-7, "seed {seed}: L2 distance {dist}");
    }
}

#[test]
fn output_minimises_the_frozen_problem_locally() {
    // At the fixed point v = v†, nudging any single cell cannot lower the
    // frozen objective by more than round-off.
    let model = benchmark_models().remove(0).1;
    let grid = GridSpec::line(16, 1.0).unwrap();
    let state = make_initial(grid, InitKind::Random, 4, 1.0, &model);
    let p = params(&model, &grid, 0.5);
    let out = v_step(&state.w, &state.eta, &state.theta, &model, 0.1, &p).unwrap();
    let value = |w: &ScalarField, e: &ScalarField| {
        frozen_objective(w, e, &state.w, &state.eta, &state.theta, (&out.w, &out.eta), &model, 0.1, p.h)
    };
    let base = value(&out.w, &out.eta);
    for i in 0..grid.len() {
        for delta in [-1e-4, 1e-4] {
            let mut w = out.w.values().to_vec();
            w[i] = (w[i] + delta).clamp(model.o_star(), model.iota_star());
            let mut e = out.eta.values().to_vec();
            e[i] += delta;
            let w = ScalarField::from_vec(grid, w).unwrap();
            let e = ScalarField::from_vec(grid, e).unwrap();
            assert!(value(&w, &out.eta) >= base - 1e-12);
            assert!(value(&out.w, &e) >= base - 1e-12);
        }
    }
}

#[test]
fn contraction_ratio_respects_h_l() {
    for (name, model) in benchmark_models() {
        for grid in [GridSpec::line(64, 1.0).unwrap(), GridSpec::plane(16, 16, 1.0).unwrap()] {
            let state = make_initial(grid, InitKind::Random, 17, 1.0, &model);
            let p = params(&model, &grid, 0.5);
            let out = v_step(&state.w, &state.eta, &state.theta, &model, 0.1, &p).unwrap();
            let bound = p.h * model.c2_norm() * (1.0 + 1e-6);
            assert!(!out.report.contraction_ratios.is_empty(), "{name}: no ratios measured");
            assert!(out.report.max_contraction_ratio() <= bound, "{name}: {:?}", out.report.contraction_ratios);
        }
    }
}

#[test]
fn perturbations_grow_at_most_by_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for (name, model) in benchmark_models() {
        let grid = GridSpec::line(64, 1.0).unwrap();
        let p = params(&model, &grid, 0.5);
        let base = make_initial(grid, InitKind::Random, 23, 1.0, &model);
        let nudge = |f: &ScalarField, lo: f64, hi: f64, rng: &mut ChaCha8Rng| {
            let v = f.values().iter().map(|x| (x + rng.gen_range(-1e-2..1e-2)).clamp(lo, hi)).collect();
            ScalarField::from_vec(grid, v).unwrap()
        };
        let w2 = nudge(&base.w, model.o_star(), model.iota_star(), &mut rng);
        let e2 = nudge(&base.eta, 0.0, 1.0, &mut rng);
        let one = v_step(&base.w, &base.eta, &base.theta, &model, 0.1, &p).unwrap();
        let two = v_step(&w2, &e2, &base.theta, &model, 0.1, &p).unwrap();
        let ratio = v_step_perturbation_bound((&base.w, &base.eta), (&w2, &e2), &one, &two);
        assert!(ratio <= 2.0 + 1e-6, "{name}: {ratio}");
    }
}

#[test]
fn box_is_invariant() {
    for (name, model) in benchmark_models() {
        let grid = GridSpec::plane(12, 12, 1.0).unwrap();
        for seed in 0..3 {
            let state = make_initial(grid, InitKind::Random, seed, 1.0, &model);
            let out = v_step(&state.w, &state.eta, &state.theta, &model, 0.0, &params(&model, &grid, 0.5)).unwrap();
            let viol = box_violation(&out.w, &out.eta, &model);
            assert!(viol <= 1e-8, "{name} seed {seed}: {viol}");
            assert_eq!(out.report.box_violation, viol);
        }
    }
}

#[test]
fn dissipation_matches_the_step_length() {
    let model = benchmark_models().remove(2).1;
    let grid = GridSpec::line(20, 1.0).unwrap();
    let state = make_initial(grid, InitKind::Random, 2, 1.0, &model);
    let p = params(&model, &grid, 0.5);
    let out = v_step(&state.w, &state.eta, &state.theta, &model, 0.1, &p).unwrap();
    let next = PhaseState::new(out.w.clone(), out.eta.clone(), state.theta.clone()).unwrap();
    let d = next.v_distance(&state);
    assert!((out.report.dissipation - d * d / (2.0 * p.h)).abs() <= 1e-15);
}

#[test]
fn rejects_bad_parameters() {
    let model = benchmark_models().remove(0).1;
    let grid = GridSpec::line(8, 1.0).unwrap();
    let s = make_initial(grid, InitKind::Wells, 0, 1.0, &model);
    let mut p = params(&model, &grid, 0.5);
    assert!(matches!(v_step(&s.w, &s.eta, &s.theta, &model, -1.0, &p), Err(VStepError::InvalidParams(_))));
    p.max_outer = 0;
    assert!(matches!(v_step(&s.w, &s.eta, &s.theta, &model, 0.0, &p), Err(VStepError::InvalidParams(_))));
    let p = VStepParams {
        max_outer: 1,
        ..params(&model, &grid, 0.5)
    };
    let r = make_initial(grid, InitKind::Random, 1, 1.0, &model);
    assert!(matches!(
        v_step(&r.w, &r.eta, &r.theta, &model, 0.0, &p),
        Err(VStepError::OuterNoConvergence { .. })
    ));
}
