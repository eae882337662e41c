use crate::grid::{GridError, GridSpec, ScalarField};

/// The triplet `[w, η, θ]` on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub w: ScalarField,
    pub eta: ScalarField,
    pub theta: ScalarField,
}

impl PhaseState {
    pub fn new(w: ScalarField, eta: ScalarField, theta: ScalarField) -> Result<Self, GridError> {
        w.same_grid(&eta)?;
        w.same_grid(&theta)?;
        Ok(Self { w, eta, theta })
    }

    pub fn constant(grid: GridSpec, w: f64, eta: f64, theta: f64) -> Self {
        Self {
            w: ScalarField::constant(grid, w),
            eta: ScalarField::constant(grid, eta),
            theta: ScalarField::constant(grid, theta),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        self.w.grid()
    }

    /// Discrete `L²` distance of the `v = [w, η]` parts.
    pub fn v_distance(&self, other: &PhaseState) -> f64 {
        v_distance(&self.w, &self.eta, &other.w, &other.eta)
    }
}

pub(crate) fn v_distance(w1: &ScalarField, e1: &ScalarField, w2: &ScalarField, e2: &ScalarField) -> f64 {
    l2_distance(w1.grid(), w1.values(), e1.values(), w2.values(), e2.values())
}

/// Discrete `L²` distance of two raw value pairs on `grid`.
pub(crate) fn l2_distance(grid: &GridSpec, w1: &[f64], e1: &[f64], w2: &[f64], e2: &[f64]) -> f64 {
    let sq: f64 = w1
        .iter()
        .zip(w2)
        .chain(e1.iter().zip(e2))
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    (sq * grid.cell_volume()).sqrt()
}
