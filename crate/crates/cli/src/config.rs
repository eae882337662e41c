//! Run configuration: one TOML file with `[model]`, `[grid]`, `[scheme]`,
//! `[init]` and optional `[output]`, `[sweep]`, `[verify]` sections.
//!
//! ```toml
//! [model]
//! potential = "g1"        # g1 | g2 | g3
//! c = 1.0
//! u = 0.0
//! o_star = 0.0
//! iota_star = 1.0
//! mobility = "kobayashi"  # kobayashi | constant
//! kappa = 0.01            # kobayashi floor
//! a0 = 1.0                # constant values
//! a = 1.0
//! b = 1.0
//!
//! [grid]
//! shape = [64]            # or [n1, n2]
//! dx = 1.0
//!
//! [scheme]
//! h_frac = 0.5            # fraction of h*; or `h = ...`, not both
//! nu = 0.1
//! n_steps = 100
//! record_every = 10
//!
//! [init]
//! kind = "random"         # wells | random | grains
//! seed = 7
//! ```

use std::path::Path;

use grainflow::init::InitSpec;
use grainflow::scheme::{self, SchemeParams};
use grainflow::{GridSpec, MobilitySpec, ModelSpec, PhaseState, PotentialSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("`{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub potential: String,
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default)]
    pub u: f64,
    #[serde(default)]
    pub o_star: f64,
    #[serde(default = "one")]
    pub iota_star: f64,
    pub mobility: String,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "one")]
    pub a0: f64,
    #[serde(default = "one")]
    pub a: f64,
    #[serde(default = "one")]
    pub b: f64,
}

fn one() -> f64 {
    1.0
}

fn default_kappa() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub shape: Vec<usize>,
    #[serde(default = "one")]
    pub dx: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_frac: Option<f64>,
    pub nu: f64,
    pub n_steps: usize,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_solver")]
    pub theta_solver: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_tol: Option<f64>,
}

fn default_record_every() -> usize {
    1
}

fn default_solver() -> String {
    "hybrid".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnapshotFormat {
    Csv,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_directory")]
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<SnapshotFormat>,
}

fn default_directory() -> String {
    "out".into()
}

fn default_formats() -> Vec<SnapshotFormat> {
    vec![SnapshotFormat::Csv]
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Strictly decreasing; defaults to `2^-1, …, 2^-8`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default = "default_pairs")]
    pub order_pairs: usize,
    #[serde(default = "default_small")]
    pub oracle_instances: usize,
    #[serde(default = "default_small")]
    pub perturbation_pairs: usize,
    #[serde(default = "default_samples")]
    pub sandwich_samples: usize,
    #[serde(default = "default_probe_steps")]
    pub probe_steps: usize,
}

fn default_pairs() -> usize {
    10
}

fn default_small() -> usize {
    5
}

fn default_samples() -> usize {
    100
}

fn default_probe_steps() -> usize {
    20
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            order_pairs: default_pairs(),
            oracle_instances: default_small(),
            perturbation_pairs: default_small(),
            sandwich_samples: default_samples(),
            probe_steps: default_probe_steps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub grid: GridSection,
    pub scheme: SchemeSection,
    pub init: InitSpec,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub verify: VerifySection,
}

/// Everything a command needs, built from a checked config.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub model: ModelSpec,
    pub grid: GridSpec,
    pub params: SchemeParams,
    pub init: PhaseState,
    pub digest: String,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Canonical form: the parsed config re-serialised with every default
    /// filled in, the output directory left out.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.output.directory = String::new();
        toml::to_string(&c).expect("config serialises")
    }

    /// SHA-256 of [`RunConfig::canonical`], hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn model_spec(&self) -> Result<ModelSpec, ConfigError> {
        let m = &self.model;
        let potential = PotentialSpec::new(&m.potential, m.c, m.u, m.o_star, m.iota_star);
        let mobility = match m.mobility.as_str() {
            "constant" => MobilitySpec::constant(m.a0, m.a, m.b),
            "kobayashi" => MobilitySpec::kobayashi(m.kappa),
            other => MobilitySpec {
                kind: other.to_string(),
                ..MobilitySpec::constant(m.a0, m.a, m.b)
            },
        };
        ModelSpec::new(potential, mobility).map_err(|e| invalid("model", e.to_string()))
    }

    pub fn grid_spec(&self) -> Result<GridSpec, ConfigError> {
        GridSpec::new(&self.grid.shape, self.grid.dx).map_err(|e| invalid("grid.shape", e.to_string()))
    }

    /// The time step, from `h` or `h_frac · h*`. A fraction outside `(0, 1)`
    /// is accepted only when the gate is overridden.
    pub fn step(&self, model: &ModelSpec, override_h_gate: bool) -> Result<f64, ConfigError> {
        match (self.scheme.h, self.scheme.h_frac) {
            (Some(_), Some(_)) => Err(invalid("scheme.h", "give either h or h_frac, not both")),
            (Some(h), None) if h > 0.0 && h.is_finite() => Ok(h),
            (Some(h), None) => Err(invalid("scheme.h", format!("must be positive, got {h}"))),
            (None, frac) => {
                let frac = frac.unwrap_or(0.5);
                if !(frac > 0.0 && frac.is_finite()) || (frac >= 1.0 && !override_h_gate) {
                    return Err(invalid(
                        "scheme.h_frac",
                        format!("must lie in (0, 1) without the gate override, got {frac}"),
                    ));
                }
                Ok(frac * scheme::h_star(model))
            }
        }
    }

    /// Checks the config and builds model, grid, parameters and initial
    /// state. `seed` replaces `init.seed` when given.
    pub fn resolve(&self, seed: Option<u64>, override_h_gate: bool) -> Result<Resolved, ConfigError> {
        let mut cfg = self.clone();
        if let Some(s) = seed {
            cfg.init.seed = s;
        }
        let model = cfg.model_spec()?;
        let grid = cfg.grid_spec()?;
        let h = cfg.step(&model, override_h_gate)?;
        let s = &cfg.scheme;
        if !(s.nu >= 0.0 && s.nu.is_finite()) {
            return Err(invalid("scheme.nu", format!("must be nonnegative, got {}", s.nu)));
        }
        if s.n_steps == 0 {
            return Err(invalid("scheme.n_steps", "must be at least 1"));
        }
        if s.record_every == 0 {
            return Err(invalid("scheme.record_every", "must be at least 1"));
        }
        if !(cfg.init.amplitude >= 0.0 && cfg.init.amplitude <= 1.0) {
            return Err(invalid("init.amplitude", format!("must lie in [0, 1], got {}", cfg.init.amplitude)));
        }
        let mut params = SchemeParams::new(h, s.nu, s.n_steps, &grid);
        params.record_every = s.record_every;
        params.theta_solver = s.theta_solver.clone();
        params.override_h_gate = override_h_gate;
        if let Some(tol) = s.gap_tol {
            params.thetastep.gap_tol = tol;
        }
        if let Some(n) = s.theta_max_iters {
            params.thetastep.max_iters = n;
        }
        if let Some(tol) = s.outer_tol {
            params.vstep.outer_tol = tol;
        }
        if let Some(tol) = s.inner_tol {
            params.vstep.inner_tol = tol;
        }
        if let Some(nus) = &cfg.sweep.nu {
            if nus.is_empty() || nus.windows(2).any(|p| !(p[1] < p[0])) || nus.iter().any(|&n| !(n >= 0.0)) {
                return Err(invalid("sweep.nu", "must be a nonempty, strictly decreasing list of nonnegative values"));
            }
        }
        let init = cfg.init.build(grid, &model);
        Ok(Resolved {
            model,
            grid,
            params,
            init,
            digest: cfg.digest(),
            seed: cfg.init.seed,
        })
    }
}
