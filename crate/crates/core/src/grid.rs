//! Uniform rectangular grids and the discrete calculus on them.
//!
//! The gradient is a forward difference whose last slice along each axis is
//! pinned to zero (homogeneous Neumann ghost). The divergence is its exact
//! negative adjoint, so `<grad f, p> = -<f, div p>` holds to round-off and
//! `div(grad f)` is the zero-Neumann Laplacian.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid dimension must be 1 or 2, got {0}")]
    BadDim(usize),
    #[error("every extent must be at least 2, got {0:?}")]
    BadShape(Vec<usize>),
    #[error("grid spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("field has {got} values but the grid has {expected} cells")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value {value} at cell {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("negative weight {value} at cell {index}")]
    NegativeWeight { index: usize, value: f64 },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("empty truncation interval [{0}, {1}]")]
    EmptyInterval(f64, f64),
}

/// Geometry of a 1D or 2D uniform grid. 1D grids are stored as `[n, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    shape: [usize; 2],
    dx: f64,
}

impl GridSpec {
    pub fn new(shape: &[usize], dx: f64) -> Result<Self, GridError> {
        let dim = shape.len();
        if dim != 1 && dim != 2 {
            return Err(GridError::BadDim(dim));
        }
        if shape.iter().any(|&n| n < 2) {
            return Err(GridError::BadShape(shape.to_vec()));
        }
        if !(dx.is_finite() && dx > 0.0) {
            return Err(GridError::BadSpacing(dx));
        }
        let shape = if dim == 1 { [shape[0], 1] } else { [shape[0], shape[1]] };
        Ok(Self { dim, shape, dx })
    }

    pub fn line(n: usize, dx: f64) -> Result<Self, GridError> {
        Self::new(&[n], dx)
    }

    pub fn plane(n1: usize, n2: usize, dx: f64) -> Result<Self, GridError> {
        Self::new(&[n1, n2], dx)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape[..self.dim]
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight of one cell, `dx^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.dx.powi(self.dim as i32)
    }

    /// Measure of the whole domain.
    pub fn volume(&self) -> f64 {
        self.len() as f64 * self.cell_volume()
    }

    /// `(extent, stride)` of an axis in row-major layout.
    pub(crate) fn axis(&self, k: usize) -> (usize, usize) {
        match (self.dim, k) {
            (1, 0) => (self.shape[0], 1),
            (2, 0) => (self.shape[0], self.shape[1]),
            (2, 1) => (self.shape[1], 1),
            _ => unreachable!("axis {k} out of range for a {}D grid", self.dim),
        }
    }

    /// Whether the cell has a forward neighbour along axis `k`.
    #[inline]
    pub(crate) fn has_forward(&self, idx: usize, k: usize) -> bool {
        let (n, stride) = self.axis(k);
        (idx / stride) % n + 1 < n
    }

    /// Coordinates of a cell centre; the second entry is 0 in 1D.
    pub fn cell_centre(&self, idx: usize) -> [f64; 2] {
        let dx = self.dx;
        match self.dim {
            1 => [(idx as f64 + 0.5) * dx, 0.0],
            _ => [((idx / self.shape[1]) as f64 + 0.5) * dx, ((idx % self.shape[1]) as f64 + 0.5) * dx],
        }
    }

    /// `"64"` or `"32x32"`.
    pub fn shape_label(&self) -> String {
        self.shape()
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join("x")
    }
}

/// Real values on the cells of a grid, row-major. Entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn from_vec(grid: GridSpec, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(GridError::NonFinite { index, value });
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        assert!(value.is_finite());
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f(x)` at cell centres `x = (i + 1/2) dx`.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Result<Self, GridError> {
        let values = (0..grid.len())
            .map(|idx| {
                let c = grid.cell_centre(idx);
                f(&c[..grid.dim()])
            })
            .collect();
        Self::from_vec(grid, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self, GridError> {
        Self::from_vec(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Quadrature inner product `sum f g dx^dim`.
    pub fn inner(&self, other: &ScalarField) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        dot(&self.values, &other.values) * self.grid.cell_volume()
    }

    /// Discrete L2 norm.
    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn same_grid(&self, other: &ScalarField) -> Result<(), GridError> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(GridError::GridMismatch)
        }
    }
}

/// One component array per axis, laid out like [`ScalarField`].
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: GridSpec,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            components: vec![vec![0.0; grid.len()]; grid.dim()],
        }
    }

    pub fn from_components(grid: GridSpec, components: Vec<Vec<f64>>) -> Result<Self, GridError> {
        if components.len() != grid.dim() {
            return Err(GridError::BadDim(components.len()));
        }
        for comp in &components {
            if comp.len() != grid.len() {
                return Err(GridError::LengthMismatch {
                    expected: grid.len(),
                    got: comp.len(),
                });
            }
            if let Some((index, &value)) = comp.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(GridError::NonFinite { index, value });
            }
        }
        Ok(Self { grid, components })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn component(&self, k: usize) -> &[f64] {
        &self.components[k]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    /// Quadrature inner product summed over components.
    pub fn inner(&self, other: &VectorField) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| dot(a, b))
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    /// Euclidean length of the vector in each cell.
    pub fn cell_norms(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for comp in &self.components {
            for (o, c) in out.iter_mut().zip(comp) {
                *o += c * c;
            }
        }
        out.iter_mut().for_each(|o| *o = o.sqrt());
        out
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Forward difference of `f` along axis `k`, written into `out`.
pub(crate) fn forward_diff(grid: &GridSpec, k: usize, f: &[f64], out: &mut [f64]) {
    let (n, stride) = grid.axis(k);
    let inv = 1.0 / grid.dx();
    let block = n * stride;
    for (fb, ob) in f.chunks_exact(block).zip(out.chunks_exact_mut(block)) {
        let (body, last) = ob.split_at_mut((n - 1) * stride);
        for ((o, a), b) in body.iter_mut().zip(&fb[..(n - 1) * stride]).zip(&fb[stride..]) {
            *o = (b - a) * inv;
        }
        last.iter_mut().for_each(|o| *o = 0.0);
    }
}

/// Adds the axis-`k` part of the divergence of `p` into `out`.
///
/// Entries of `p` on the last slice along the axis are ignored; they pair
/// with the pinned-zero gradient entries.
pub(crate) fn backward_diff_add(grid: &GridSpec, k: usize, p: &[f64], out: &mut [f64]) {
    let (n, stride) = grid.axis(k);
    let inv = 1.0 / grid.dx();
    let block = n * stride;
    let body = (n - 1) * stride;
    for (pb, ob) in p.chunks_exact(block).zip(out.chunks_exact_mut(block)) {
        for (o, q) in ob[..body].iter_mut().zip(&pb[..body]) {
            *o += q * inv;
        }
        for (o, q) in ob[stride..].iter_mut().zip(&pb[..body]) {
            *o -= q * inv;
        }
    }
}

/// Per-cell `|grad f|` for a raw value slice.
pub(crate) fn gradient_norms(grid: &GridSpec, f: &[f64]) -> Vec<f64> {
    let mut sq = vec![0.0; grid.len()];
    let mut buf = vec![0.0; grid.len()];
    for k in 0..grid.dim() {
        forward_diff(grid, k, f, &mut buf);
        for (s, b) in sq.iter_mut().zip(&buf) {
            *s += b * b;
        }
    }
    sq.iter_mut().for_each(|s| *s = s.sqrt());
    sq
}

pub fn gradient(f: &ScalarField) -> VectorField {
    let grid = *f.grid();
    let components = (0..grid.dim())
        .map(|k| {
            let mut out = vec![0.0; grid.len()];
            forward_diff(&grid, k, f.values(), &mut out);
            out
        })
        .collect();
    VectorField { grid, components }
}

pub fn divergence(p: &VectorField) -> ScalarField {
    let grid = *p.grid();
    let mut out = vec![0.0; grid.len()];
    for k in 0..grid.dim() {
        backward_diff_add(&grid, k, p.component(k), &mut out);
    }
    ScalarField { grid, values: out }
}

pub fn neumann_laplacian(f: &ScalarField) -> ScalarField {
    divergence(&gradient(f))
}

/// Discrete weighted total variation `sum rho |grad f| dx^dim`.
pub fn weighted_tv(rho: &ScalarField, f: &ScalarField) -> Result<f64, GridError> {
    rho.same_grid(f)?;
    check_nonnegative(rho.values())?;
    let norms = gradient_norms(f.grid(), f.values());
    Ok(dot(rho.values(), &norms) * f.grid().cell_volume())
}

/// Total variation with unit weight.
pub fn total_variation(f: &ScalarField) -> f64 {
    gradient_norms(f.grid(), f.values()).iter().sum::<f64>() * f.grid().cell_volume()
}

/// `1/2 sum |grad f|^2 dx^dim`.
pub fn dirichlet_energy(f: &ScalarField) -> f64 {
    0.5 * squared_gradient_sum(f.grid(), f.values()) * f.grid().cell_volume()
}

/// `sum b |grad f|^2 dx^dim` (no one-half).
pub fn weighted_dirichlet_energy(b: &ScalarField, f: &ScalarField) -> Result<f64, GridError> {
    b.same_grid(f)?;
    check_nonnegative(b.values())?;
    let norms = gradient_norms(f.grid(), f.values());
    Ok(b.values()
        .iter()
        .zip(&norms)
        .map(|(w, n)| w * n * n)
        .sum::<f64>()
        * f.grid().cell_volume())
}

pub(crate) fn squared_gradient_sum(grid: &GridSpec, f: &[f64]) -> f64 {
    let mut buf = vec![0.0; grid.len()];
    let mut total = 0.0;
    for k in 0..grid.dim() {
        forward_diff(grid, k, f, &mut buf);
        total += dot(&buf, &buf);
    }
    total
}

/// Pointwise clamp `a ∨ (b ∧ f)`.
pub fn truncate(f: &ScalarField, a: f64, b: f64) -> Result<ScalarField, GridError> {
    if a > b {
        return Err(GridError::EmptyInterval(a, b));
    }
    f.map(|v| v.clamp(a, b))
}

/// Certified upper bound on the squared operator norm of [`gradient`].
pub fn grad_operator_norm_bound(grid: &GridSpec) -> f64 {
    4.0 * grid.dim() as f64 / (grid.dx() * grid.dx())
}

fn check_nonnegative(values: &[f64]) -> Result<(), GridError> {
    match values.iter().enumerate().find(|(_, &v)| v < 0.0) {
        Some((index, &value)) => Err(GridError::NegativeWeight { index, value }),
        None => Ok(()),
    }
}
