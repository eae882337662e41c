//! Seeded initial data.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{GridSpec, ScalarField};
use crate::model::ModelSpec;
use crate::state::PhaseState;

/// Number of cosine modes in a `random` field.
const MODES: usize = 4;
/// Largest wavenumber per axis, in half-periods across the domain.
const MAX_WAVENUMBER: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    /// The solid well `(ι*, 1, 0)` everywhere.
    Wells,
    /// Low-frequency cosine mixtures mapped into the admissible boxes.
    Random,
    /// Near-solid `w, η`; `θ` piecewise constant on Voronoi cells.
    Grains,
}

impl InitKind {
    pub fn name(self) -> &'static str {
        match self {
            InitKind::Wells => "wells",
            InitKind::Random => "random",
            InitKind::Grains => "grains",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    pub kind: InitKind,
    pub seed: u64,
    /// Scales the deviations; `θ` stays within `[-amplitude, amplitude]`.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Grain count for `grains`.
    #[serde(default = "default_grains")]
    pub grains: usize,
}

fn default_amplitude() -> f64 {
    1.0
}

fn default_grains() -> usize {
    4
}

impl InitSpec {
    pub fn new(kind: InitKind, seed: u64) -> Self {
        Self {
            kind,
            seed,
            amplitude: default_amplitude(),
            grains: default_grains(),
        }
    }

    pub fn build(&self, grid: GridSpec, model: &ModelSpec) -> PhaseState {
        match self.kind {
            InitKind::Grains => make_grains(grid, self.seed, self.grains, self.amplitude, model),
            kind => make_initial(grid, kind, self.seed, self.amplitude, model),
        }
    }
}

/// Builds a state with `w ∈ [o*, ι*]`, `η ∈ [0, 1]` and `|θ| ≤ amplitude`.
/// Same inputs give the same state. `grains` uses four grains.
pub fn make_initial(grid: GridSpec, kind: InitKind, seed: u64, amplitude: f64, model: &ModelSpec) -> PhaseState {
    let (lo, hi) = (model.o_star(), model.iota_star());
    let amp = amplitude.clamp(0.0, 1.0);
    let n = grid.len();
    match kind {
        InitKind::Wells => assemble(grid, vec![hi; n], vec![1.0; n], vec![0.0; n]),
        InitKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = cosine_mixture(&grid, &mut rng);
            let eta = cosine_mixture(&grid, &mut rng);
            let theta = cosine_mixture(&grid, &mut rng);
            assemble(
                grid,
                w.iter().map(|f| lo + (hi - lo) * 0.5 * (1.0 + amp * f)).collect(),
                eta.iter().map(|f| 0.5 * (1.0 + amp * f)).collect(),
                theta.iter().map(|f| amp * f).collect(),
            )
        }
        InitKind::Grains => make_grains(grid, seed, default_grains(), amplitude, model),
    }
}

/// `count` grains with distinct orientations in `[-amplitude, amplitude]`;
/// `w, η` within 10% of the solid well.
pub fn make_grains(grid: GridSpec, seed: u64, count: usize, amplitude: f64, model: &ModelSpec) -> PhaseState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (model.o_star(), model.iota_star());
    let amp = amplitude.clamp(0.0, 1.0);
    let count = count.max(1);
    let extent: Vec<f64> = grid.shape().iter().map(|&k| k as f64 * grid.dx()).collect();
    let seeds: Vec<Vec<f64>> = (0..count)
        .map(|_| extent.iter().map(|&e| rng.gen_range(0.0..e)).collect())
        .collect();
    // Evenly spread orientations in shuffled order keep them distinct.
    let mut orient: Vec<f64> = (0..count)
        .map(|k| if count == 1 { 0.0 } else { amp * (2.0 * k as f64 / (count - 1) as f64 - 1.0) })
        .collect();
    for k in (1..count).rev() {
        orient.swap(k, rng.gen_range(0..=k));
    }
    let n = grid.len();
    let mut w = Vec::with_capacity(n);
    let mut eta = Vec::with_capacity(n);
    let mut theta = Vec::with_capacity(n);
    for i in 0..n {
        let x = &grid.cell_centre(i)[..grid.dim()];
        let nearest = (0..count)
            .min_by(|&a, &b| dist2(&seeds[a], x).total_cmp(&dist2(&seeds[b], x)))
            .expect("at least one grain");
        w.push(hi - (hi - lo) * 0.1 * rng.gen::<f64>());
        eta.push(1.0 - 0.1 * rng.gen::<f64>());
        theta.push(orient[nearest]);
    }
    assemble(grid, w, eta, theta)
}

/// Sum of random cosines normalised into `[-1, 1]`.
fn cosine_mixture(grid: &GridSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let dim = grid.dim();
    let extent: Vec<f64> = grid.shape().iter().map(|&k| k as f64 * grid.dx()).collect();
    let modes: Vec<(Vec<f64>, f64, f64)> = (0..MODES)
        .map(|_| {
            let k = (0..dim)
                .map(|a| PI * rng.gen_range(0..=MAX_WAVENUMBER) as f64 / extent[a])
                .collect();
            (k, rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.2..1.0))
        })
        .collect();
    let total: f64 = modes.iter().map(|m| m.2).sum();
    (0..grid.len())
        .map(|i| {
            let x = grid.cell_centre(i);
            let s: f64 = modes
                .iter()
                .map(|(k, phase, a)| {
                    let arg: f64 = k.iter().zip(x).map(|(k, x)| k * x).sum();
                    a * (arg + phase).cos()
                })
                .sum();
            (s / total).clamp(-1.0, 1.0)
        })
        .collect()
}

fn assemble(grid: GridSpec, w: Vec<f64>, eta: Vec<f64>, theta: Vec<f64>) -> PhaseState {
    let field = |v| ScalarField::from_vec(grid, v).expect("generated values are finite");
    PhaseState {
        w: field(w),
        eta: field(eta),
        theta: field(theta),
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
