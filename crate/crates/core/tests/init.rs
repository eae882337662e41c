use grainflow::init::{make_grains, make_initial, InitKind, InitSpec};
use grainflow::verify::benchmark_models;
use grainflow::GridSpec;

#[test]
fn random_fields_lie_in_the_boxes() {
    for (name, model) in benchmark_models() {
        for grid in [GridSpec::line(64, 1.0).unwrap(), GridSpec::plane(32, 32, 1.0).unwrap()] {
            for seed in 0..5 {
                let s = make_initial(grid, InitKind::Random, seed, 1.0, &model);
                assert!(s.w.min() >= model.o_star() && s.w.max() <= model.iota_star(), "{name}");
                assert!(s.eta.min() >= 0.0 && s.eta.max() <= 1.0, "{name}");
                assert!(s.theta.max_abs() <= 1.0, "{name}");
                // Not constant: at least some structure in every field.
                assert!(s.theta.max() - s.theta.min() > 1e-3, "{name} seed {seed}");
            }
        }
    }
}

#[test]
fn amplitude_scales_the_orientation() {
    let model = benchmark_models().remove(0).1;
    let grid = GridSpec::line(64, 1.0).unwrap();
    let s = make_initial(grid, InitKind::Random, 3, 0.25, &model);
    assert!(s.theta.max_abs() <= 0.25);
    let zero = make_initial(grid, InitKind::Random, 3, 0.0, &model);
    assert_eq!(zero.theta.max_abs(), 0.0);
}

#[test]
fn same_seed_same_state() {
    let model = benchmark_models().remove(2).1;
    let grid = GridSpec::plane(16, 16, 1.0).unwrap();
    for kind in [InitKind::Random, InitKind::Grains, InitKind::Wells] {
        let a = make_initial(grid, kind, 42, 1.0, &model);
        let b = make_initial(grid, kind, 42, 1.0, &model);
        assert_eq!(a, b);
    }
    let c = make_initial(grid, InitKind::Random, 43, 1.0, &model);
    assert_ne!(c, make_initial(grid, InitKind::Random, 42, 1.0, &model));
}

#[test]
fn wells_sit_at_the_solid_corner() {
    let model = benchmark_models().remove(1).1;
    let s = make_initial(GridSpec::line(5, 1.0).unwrap(), InitKind::Wells, 0, 1.0, &model);
    assert!(s.w.values().iter().all(|&w| w == model.iota_star()));
    assert!(s.eta.values().iter().all(|&e| e == 1.0));
    assert!(s.theta.values().iter().all(|&t| t == 0.0));
}

#[test]
fn grains_have_distinct_orientations() {
    let model = benchmark_models().remove(2).1;
    let grid = GridSpec::plane(32, 32, 1.0).unwrap();
    for count in [2, 4, 6] {
        let s = make_grains(grid, 5, count, 1.0, &model);
        let mut values: Vec<f64> = s.theta.values().to_vec();
        values.sort_by(f64::total_cmp);
        values.dedup();
        assert_eq!(values.len(), count);
        assert!(s.w.min() >= model.iota_star() - 0.1 * (model.iota_star() - model.o_star()));
        assert!(s.eta.min() >= 0.9 && s.eta.max() <= 1.0);
    }
}

#[test]
fn defaults_and_build() {
    let spec = InitSpec::new(InitKind::Grains, 9);
    assert_eq!(spec.grains, 4);
    assert_eq!(spec.amplitude, 1.0);
    let model = benchmark_models().remove(2).1;
    let grid = GridSpec::plane(8, 8, 1.0).unwrap();
    assert_eq!(spec.build(grid, &model), make_grains(grid, 9, 4, 1.0, &model));
    assert_eq!(InitKind::Random.name(), "random");
}
