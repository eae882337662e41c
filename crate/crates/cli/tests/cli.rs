use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use grainflow::{GridSpec, ScalarField};
use grainflow_cli::config::{ConfigError, RunConfig};
use grainflow_cli::output::{read_snapshot_csv, read_snapshot_raw, write_snapshot_csv, write_snapshot_raw};

const BENCHMARK: &str = r#"
[model]
potential = "g1"
mobility = "kobayashi"

[grid]
shape = [32]

[scheme]
h_frac = 0.5
nu = 0.1
n_steps = 12
record_every = 4

[init]
kind = "random"
seed = 7

[output]
formats = ["csv", "raw"]

[verify]
order_pairs = 4
oracle_instances = 2
perturbation_pairs = 2
sandwich_samples = 20
"#;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn grainflow(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grainflow"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

/// Data rows of a file written with a leading `#` comment line.
fn rows(path: &Path) -> Vec<csv::StringRecord> {
    let text = std::fs::read_to_string(path).unwrap();
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    csv::Reader::from_reader(body.as_bytes()).records().map(Result::unwrap).collect()
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let idx = reader.headers().unwrap().iter().position(|h| h == name).expect("column present");
    reader.records().map(|r| r.unwrap()[idx].to_string()).collect()
}

#[test]
fn wells_run_stays_at_zero_energy() {
    let dir = tempfile::tempdir().unwrap();
    let out = grainflow(&["run"], &configs_dir().join("wells.toml"), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let log = dir.path().join("energy.csv");
    let first = std::fs::read_to_string(&log).unwrap().lines().next().unwrap().to_string();
    assert!(first.starts_with("# digest=") && first.contains("seed=1"));
    let totals = column(&log, "total");
    assert_eq!(totals.len(), 6);
    assert!(totals.iter().all(|t| t.parse::<f64>().unwrap() == 0.0), "{totals:?}");
    assert!(dir.path().join("theta_000005.csv").exists());
}

#[test]
fn verify_passes_on_a_short_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BENCHMARK);
    let out = grainflow(&["verify"], &cfg, &dir.path().join("out"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let checks = dir.path().join("out/checks.csv");
    let passed = column(&checks, "passed");
    assert!(passed.len() >= 15);
    assert!(passed.iter().all(|p| p == "true"));
    let names = column(&checks, "name");
    for expected in ["dissipation", "box", "max_principle", "contraction", "determinism", "theta_oracle", "t_monotonicity"] {
        assert!(names.iter().any(|n| n == expected), "missing {expected}");
    }
}

#[test]
fn probe_needs_the_override_and_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("probe.toml");
    let refused = grainflow(&["probe-contraction"], &cfg, dir.path());
    assert_eq!(refused.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&refused.stderr).contains("scheme.h_frac"));
    let out = grainflow(&["probe-contraction", "--override-h-gate"], &cfg, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(column(&dir.path().join("probe.csv"), "outside_hypotheses"), ["true"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("outside hypotheses"));
}

#[test]
fn run_output_is_reproducible_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BENCHMARK);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(grainflow(&["run"], &cfg, &a).status.success());
    assert!(grainflow(&["run"], &cfg, &b).status.success());
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    // energy log plus w, eta, theta at steps 0, 4, 8, 12 in csv, bin and sidecar
    assert_eq!(names.len(), 1 + 3 * 4 * 3);
    for name in names {
        let (x, y) = (std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap());
        assert!(x == y, "{name:?} differs");
    }
    let theta = read_snapshot_raw(&a.join("theta_000012.bin")).unwrap();
    assert_eq!(theta, read_snapshot_csv(&a.join("theta_000012.csv")).unwrap());
    assert_eq!(rows(&a.join("energy.csv")).len(), 13);
}

#[test]
fn seed_override_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BENCHMARK);
    let out = Command::new(env!("CARGO_BIN_EXE_grainflow"))
        .args(["run", "--seed", "8", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("s8"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(grainflow(&["run"], &cfg, &dir.path().join("s7")).status.success());
    let a = std::fs::read(dir.path().join("s7/theta_000000.csv")).unwrap();
    let b = std::fs::read(dir.path().join("s8/theta_000000.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn sweep_writes_one_row_per_nu() {
    let dir = tempfile::tempdir().unwrap();
    let text = BENCHMARK.replace("n_steps = 12", "n_steps = 10") + "\n[sweep]\nnu = [0.5, 0.25, 0.125, 0.0625, 0.03125]\n";
    let cfg = write_config(dir.path(), &text);
    let out = grainflow(&["sweep-nu"], &cfg, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(column(&dir.path().join("sweep.csv"), "nu"), ["0.5", "0.25", "0.125", "0.0625", "0.03125"]);
}

#[test]
fn snapshots_round_trip_bitwise() {
    let grid = GridSpec::plane(5, 3, 0.25).unwrap();
    let values: Vec<f64> = (0..15).map(|i| (i as f64 * 0.7).sin() / 3.0 + 1e-300 * i as f64).collect();
    let field = ScalarField::from_vec(grid, values).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (c, r) = (dir.path().join("f.csv"), dir.path().join("f.bin"));
    write_snapshot_csv(&c, &field, "abc").unwrap();
    write_snapshot_raw(&r, &field, "abc").unwrap();
    for back in [read_snapshot_csv(&c).unwrap(), read_snapshot_raw(&r).unwrap()] {
        assert_eq!(back.grid(), field.grid());
        let same = back.values().iter().zip(field.values()).all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(same);
    }
    std::fs::write(&r, [0u8; 7]).unwrap();
    assert!(read_snapshot_raw(&r).is_err());
}

#[test]
fn config_errors_are_reported_with_their_key() {
    let base = RunConfig::from_toml(BENCHMARK).unwrap();
    assert!(matches!(
        RunConfig::from_toml(&BENCHMARK.replace("seed = 7", "seed = 7\ncolour = 1")),
        Err(ConfigError::Parse(_))
    ));
    let both = RunConfig::from_toml(&BENCHMARK.replace("h_frac = 0.5", "h_frac = 0.5\nh = 0.1")).unwrap();
    assert!(matches!(both.resolve(None, false), Err(ConfigError::Invalid { key: "scheme.h", .. })));
    let big = RunConfig::from_toml(&BENCHMARK.replace("h_frac = 0.5", "h_frac = 1.5")).unwrap();
    assert!(matches!(big.resolve(None, false), Err(ConfigError::Invalid { key: "scheme.h_frac", .. })));
    assert!(big.resolve(None, true).is_ok());
    let bad_sweep = RunConfig::from_toml(&(BENCHMARK.to_string() + "\n[sweep]\nnu = [0.1, 0.2]\n")).unwrap();
    assert!(matches!(bad_sweep.resolve(None, false), Err(ConfigError::Invalid { key: "sweep.nu", .. })));
    let bad_grid = RunConfig::from_toml(&BENCHMARK.replace("shape = [32]", "shape = [0]")).unwrap();
    assert!(matches!(bad_grid.resolve(None, false), Err(ConfigError::Invalid { key: "grid.shape", .. })));
    let bad_model = RunConfig::from_toml(&BENCHMARK.replace("\"g1\"", "\"g9\"")).unwrap();
    assert!(matches!(bad_model.resolve(None, false), Err(ConfigError::Invalid { key: "model", .. })));
    assert!(base.resolve(None, false).is_ok());

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[model]\npotential = 1\n");
    assert_eq!(grainflow(&["run"], &cfg, dir.path()).status.code(), Some(2));
    let missing = grainflow(&["run"], &dir.path().join("absent.toml"), dir.path());
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn digest_ignores_the_output_directory_only() {
    let base = RunConfig::from_toml(BENCHMARK).unwrap();
    let moved = RunConfig::from_toml(&BENCHMARK.replace("[output]", "[output]\ndirectory = \"elsewhere\"")).unwrap();
    assert_eq!(base.digest(), moved.digest());
    let other = RunConfig::from_toml(&BENCHMARK.replace("nu = 0.1", "nu = 0.2")).unwrap();
    assert_ne!(base.digest(), other.digest());
    assert_eq!(base.digest().len(), 64);
}
