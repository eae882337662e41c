//! File formats: field snapshots (CSV or raw with a TOML sidecar), the
//! energy log and check tables. Every file starts with comment lines that
//! carry the config digest.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use grainflow::scheme::{SchemeSink, StepReport};
use grainflow::verify::CheckResult;
use grainflow::vstep;
use grainflow::{GridSpec, ModelSpec, PhaseState, ScalarField};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SnapshotFormat;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> OutputError + '_ {
    move |source| OutputError::Csv {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, reason: impl Into<String>) -> OutputError {
    OutputError::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

pub const ENERGY_COLUMNS: [&str; 14] = [
    "step",
    "t",
    "dirichlet_v",
    "gamma",
    "g",
    "wtv",
    "nu_dirichlet",
    "total",
    "diss_v",
    "diss_theta",
    "v_outer_iters",
    "theta_iters",
    "max_box_violation",
    "linf_theta",
];

/// `# grid dim=<d> shape=<n1>[x<n2>] dx=<dx>`
pub fn grid_header(grid: &GridSpec) -> String {
    format!("# grid dim={} shape={} dx={}", grid.dim(), grid.shape_label(), grid.dx())
}

fn parse_grid_header(line: &str, path: &Path) -> Result<GridSpec, OutputError> {
    let bad = || format_err(path, format!("bad grid header `{line}`"));
    let rest = line.strip_prefix("# grid ").ok_or_else(bad)?;
    let (mut dim, mut shape, mut dx) = (None, None, None);
    for part in rest.split_whitespace() {
        let (k, v) = part.split_once('=').ok_or_else(bad)?;
        match k {
            "dim" => dim = v.parse::<usize>().ok(),
            "shape" => shape = v.split('x').map(|s| s.parse::<usize>().ok()).collect::<Option<Vec<_>>>(),
            "dx" => dx = v.parse::<f64>().ok(),
            _ => return Err(bad()),
        }
    }
    let (dim, shape, dx) = (dim.ok_or_else(bad)?, shape.ok_or_else(bad)?, dx.ok_or_else(bad)?);
    if shape.len() != dim {
        return Err(bad());
    }
    GridSpec::new(&shape, dx).map_err(|e| format_err(path, e.to_string()))
}

fn create(path: &Path) -> Result<BufWriter<File>, OutputError> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

/// Grid header, digest line, then one value per line in row-major order.
pub fn write_snapshot_csv(path: &Path, field: &ScalarField, digest: &str) -> Result<(), OutputError> {
    let mut out = create(path)?;
    writeln!(out, "{}", grid_header(field.grid())).map_err(io_err(path))?;
    writeln!(out, "# digest={digest}").map_err(io_err(path))?;
    for v in field.values() {
        writeln!(out, "{v}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn read_snapshot_csv(path: &Path) -> Result<ScalarField, OutputError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let first = text.lines().next().ok_or_else(|| format_err(path, "empty file"))?;
    let grid = parse_grid_header(first, path)?;
    let values = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.trim().parse::<f64>().map_err(|e| format_err(path, format!("`{l}`: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    ScalarField::from_vec(grid, values).map_err(|e| format_err(path, e.to_string()))
}

/// Metadata stored next to a raw snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub dim: usize,
    pub shape: Vec<usize>,
    pub dx: f64,
    pub digest: String,
    pub encoding: String,
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("toml")
}

/// Little-endian `f64` values, row-major, with a `.toml` sidecar.
pub fn write_snapshot_raw(path: &Path, field: &ScalarField, digest: &str) -> Result<(), OutputError> {
    let mut out = create(path)?;
    for v in field.values() {
        out.write_all(&v.to_le_bytes()).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))?;
    let grid = field.grid();
    let meta = RawSidecar {
        dim: grid.dim(),
        shape: grid.shape().to_vec(),
        dx: grid.dx(),
        digest: digest.to_string(),
        encoding: "f64le".into(),
    };
    let side = sidecar_path(path);
    std::fs::write(&side, toml::to_string(&meta).expect("sidecar serialises")).map_err(io_err(&side))
}

pub fn read_snapshot_raw(path: &Path) -> Result<ScalarField, OutputError> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(io_err(&side))?;
    let meta: RawSidecar = toml::from_str(&text).map_err(|e| format_err(&side, e.to_string()))?;
    if meta.encoding != "f64le" || meta.shape.len() != meta.dim {
        return Err(format_err(&side, "unsupported sidecar"));
    }
    let grid = GridSpec::new(&meta.shape, meta.dx).map_err(|e| format_err(&side, e.to_string()))?;
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    if bytes.len() != 8 * grid.len() {
        return Err(format_err(path, format!("expected {} bytes, found {}", 8 * grid.len(), bytes.len())));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunks of eight")))
        .collect();
    ScalarField::from_vec(grid, values).map_err(|e| format_err(path, e.to_string()))
}

/// Snapshot file stem for one field at one step, e.g. `theta_000010`.
pub fn snapshot_stem(field: &str, step: usize) -> String {
    format!("{field}_{step:06}")
}

fn header_lines(out: &mut impl Write, digest: &str, seed: u64) -> std::io::Result<()> {
    writeln!(out, "# digest={digest} seed={seed}")
}

/// Writes the energy log row by row and snapshots as they arrive.
pub struct FileSink {
    dir: PathBuf,
    digest: String,
    formats: Vec<SnapshotFormat>,
    log: csv::Writer<BufWriter<File>>,
    log_path: PathBuf,
    files: Vec<PathBuf>,
}

impl FileSink {
    /// Creates the directory and the log, and writes the log row for the
    /// initial state.
    pub fn create(
        dir: &Path,
        digest: &str,
        seed: u64,
        formats: &[SnapshotFormat],
        init: &PhaseState,
        model: &ModelSpec,
        nu: f64,
    ) -> Result<Self, OutputError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let log_path = dir.join("energy.csv");
        let mut file = create(&log_path)?;
        header_lines(&mut file, digest, seed).map_err(io_err(&log_path))?;
        let mut log = csv::Writer::from_writer(file);
        log.write_record(ENERGY_COLUMNS).map_err(csv_err(&log_path))?;
        let e = grainflow::energy::free_energy(init, model, nu).map_err(|e| format_err(&log_path, e.to_string()))?;
        let box_v = vstep::box_violation(&init.w, &init.eta, model);
        let row = [
            "0".to_string(),
            "0".to_string(),
            e.dirichlet_v.to_string(),
            e.gamma_term.to_string(),
            e.g_term.to_string(),
            e.wtv_term.to_string(),
            e.nu_dirichlet_term.to_string(),
            e.total.to_string(),
            "0".to_string(),
            "0".to_string(),
            "0".to_string(),
            "0".to_string(),
            box_v.to_string(),
            init.theta.max_abs().to_string(),
        ];
        log.write_record(&row).map_err(csv_err(&log_path))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            digest: digest.to_string(),
            formats: formats.to_vec(),
            log,
            files: vec![log_path.clone()],
            log_path,
        })
    }

    /// Flushes the log and returns every file written.
    pub fn finish(mut self) -> Result<Vec<PathBuf>, OutputError> {
        self.log.flush().map_err(io_err(&self.log_path))?;
        Ok(self.files)
    }

    fn row(r: &StepReport) -> [String; 14] {
        let e = &r.energy;
        [
            r.step.to_string(),
            r.t.to_string(),
            e.dirichlet_v.to_string(),
            e.gamma_term.to_string(),
            e.g_term.to_string(),
            e.wtv_term.to_string(),
            e.nu_dirichlet_term.to_string(),
            e.total.to_string(),
            r.diss_v.to_string(),
            r.diss_theta.to_string(),
            r.v.outer_iters.to_string(),
            r.theta.iters.to_string(),
            r.v.box_violation.to_string(),
            r.theta.linf_out.to_string(),
        ]
    }

    fn snapshot(&mut self, step: usize, state: &PhaseState) -> Result<(), OutputError> {
        for (name, field) in [("w", &state.w), ("eta", &state.eta), ("theta", &state.theta)] {
            let stem = snapshot_stem(name, step);
            for format in &self.formats {
                let path = match format {
                    SnapshotFormat::Csv => {
                        let p = self.dir.join(format!("{stem}.csv"));
                        write_snapshot_csv(&p, field, &self.digest)?;
                        p
                    }
                    SnapshotFormat::Raw => {
                        let p = self.dir.join(format!("{stem}.bin"));
                        write_snapshot_raw(&p, field, &self.digest)?;
                        self.files.push(sidecar_path(&p));
                        p
                    }
                };
                self.files.push(path);
            }
        }
        Ok(())
    }
}

impl SchemeSink for FileSink {
    fn on_step(&mut self, report: &StepReport) -> Result<(), String> {
        self.log.write_record(Self::row(report)).map_err(|e| e.to_string())
    }

    fn on_snapshot(&mut self, step: usize, _t: f64, state: &PhaseState) -> Result<(), String> {
        self.snapshot(step, state).map_err(|e| e.to_string())
    }
}

/// Digest line, then `name,passed,worst_violation,tolerance,context`.
pub fn write_checks_csv(path: &Path, checks: &[CheckResult], digest: &str, seed: u64) -> Result<(), OutputError> {
    write_rows(path, digest, seed, checks)
}

/// Digest line, then one serialised row per record with a header.
pub fn write_rows<T: Serialize>(path: &Path, digest: &str, seed: u64, rows: &[T]) -> Result<(), OutputError> {
    let mut file = create(path)?;
    header_lines(&mut file, digest, seed).map_err(io_err(path))?;
    let mut out = csv::Writer::from_writer(file);
    for row in rows {
        out.serialize(row).map_err(csv_err(path))?;
    }
    out.flush().map_err(io_err(path))
}
