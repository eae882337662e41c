use crate::grid::{self, GridError, GridSpec, ScalarField};
use crate::model::ModelSpec;

/// The per-step orientation problem in cell-sum form:
///
/// `P(θ) = ½ Σ m (θ - θ_prev)² + Σ (a |∇θ| + b |∇θ|²)`
///
/// with `m = α₀ dx^d / h`, `a = α dx^d`, `b = ν β dx^d`, all per cell.
/// `P` equals `(1/2h)‖√α₀(θ - θ_prev)‖² + Φ_ν(v; θ)`.
#[derive(Debug, Clone)]
pub struct ThetaProblem {
    pub(crate) grid: GridSpec,
    pub(crate) theta_prev: Vec<f64>,
    pub(crate) data_weight: Vec<f64>,
    pub(crate) tv_weight: Vec<f64>,
    pub(crate) quad_weight: Vec<f64>,
    pub(crate) h: f64,
    /// Range of `θ_prev`; clamping into it never increases `P`.
    pub(crate) bounds: (f64, f64),
}

impl ThetaProblem {
    pub fn new(
        theta_prev: &ScalarField,
        w: &ScalarField,
        eta: &ScalarField,
        model: &ModelSpec,
        nu: f64,
        h: f64,
    ) -> Result<Self, GridError> {
        theta_prev.same_grid(w)?;
        theta_prev.same_grid(eta)?;
        let mob = model.mobility();
        let n = theta_prev.grid().len();
        let (mut a0, mut a, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for (&wv, &ev) in w.values().iter().zip(eta.values()) {
            let m = mob.eval(wv, ev);
            a0.push(m.a0);
            a.push(m.a);
            b.push(m.b);
        }
        Self::from_mobilities(theta_prev, &a0, &a, &b, nu, h)
    }

    /// Builds the problem from per-cell mobility values.
    pub fn from_mobilities(
        theta_prev: &ScalarField,
        alpha0: &[f64],
        alpha: &[f64],
        beta: &[f64],
        nu: f64,
        h: f64,
    ) -> Result<Self, GridError> {
        let grid = *theta_prev.grid();
        let n = grid.len();
        for slice in [alpha0, alpha, beta] {
            if slice.len() != n {
                return Err(GridError::LengthMismatch {
                    expected: n,
                    got: slice.len(),
                });
            }
        }
        for slice in [alpha, beta] {
            if let Some((index, &value)) = slice.iter().enumerate().find(|(_, &v)| v < 0.0) {
                return Err(GridError::NegativeWeight { index, value });
            }
        }
        if let Some((index, &value)) = alpha0.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
            return Err(GridError::NegativeWeight { index, value });
        }
        let vol = grid.cell_volume();
        let bounds = (theta_prev.min(), theta_prev.max());
        Ok(Self {
            grid,
            theta_prev: theta_prev.values().to_vec(),
            data_weight: alpha0.iter().map(|v| v * vol / h).collect(),
            tv_weight: alpha.iter().map(|v| v * vol).collect(),
            quad_weight: beta.iter().map(|v| nu * v * vol).collect(),
            h,
            bounds,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.theta_prev.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta_prev.is_empty()
    }

    pub fn theta_prev(&self) -> &[f64] {
        &self.theta_prev
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Primal objective `P(θ)`.
    pub fn objective(&self, theta: &[f64]) -> f64 {
        let norms = grid::gradient_norms(&self.grid, theta);
        let mut total = 0.0;
        for i in 0..theta.len() {
            let d = theta[i] - self.theta_prev[i];
            let n = norms[i];
            total += 0.5 * self.data_weight[i] * d * d + self.tv_weight[i] * n + self.quad_weight[i] * n * n;
        }
        total
    }

    /// `Φ_ν` part of the objective only.
    pub fn phi(&self, theta: &[f64]) -> f64 {
        let norms = grid::gradient_norms(&self.grid, theta);
        norms
            .iter()
            .zip(self.tv_weight.iter().zip(&self.quad_weight))
            .map(|(n, (a, b))| a * n + b * n * n)
            .sum()
    }

    /// `(1/h)‖√α₀(θ - θ_prev)‖²`, the dissipated amount of the step.
    pub fn dissipation(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(&self.theta_prev)
            .zip(&self.data_weight)
            .map(|((t, p), m)| m * (t - p) * (t - p))
            .sum()
    }

    /// Weighted `L²` distance `‖√α₀(x - y)‖`.
    pub fn weighted_distance(&self, x: &[f64], y: &[f64]) -> f64 {
        let s: f64 = x
            .iter()
            .zip(y)
            .zip(&self.data_weight)
            .map(|((a, b), m)| m * (a - b) * (a - b))
            .sum();
        (s * self.h).sqrt()
    }

    /// Dual objective `D(p) = -G*(div p) - F*(p)`, a lower bound on `P`.
    ///
    /// Infeasible dual points (outside the ball where `b = 0`) give `-∞`.
    pub fn dual_objective(&self, p: &[Vec<f64>]) -> f64 {
        let n = self.len();
        let mut div = vec![0.0; n];
        for (k, comp) in p.iter().enumerate() {
            grid::backward_diff_add(&self.grid, k, comp, &mut div);
        }
        let mut total = 0.0;
        for i in 0..n {
            total -= div[i] * self.theta_prev[i] + div[i] * div[i] / (2.0 * self.data_weight[i]);
        }
        for i in 0..n {
            let mut sq = 0.0;
            for (k, comp) in p.iter().enumerate() {
                if self.grid.has_forward(i, k) {
                    sq += comp[i] * comp[i];
                }
            }
            let norm = sq.sqrt();
            let (a, b) = (self.tv_weight[i], self.quad_weight[i]);
            if b > 0.0 {
                let excess = (norm - a).max(0.0);
                total -= excess * excess / (4.0 * b);
            } else if norm > a * (1.0 + 1e-12) + 1e-300 {
                return f64::NEG_INFINITY;
            }
        }
        total
    }

    /// Clamps into the range of `θ_prev` (objective non-increasing).
    pub fn clip(&self, theta: &mut [f64]) {
        let (lo, hi) = self.bounds;
        theta.iter_mut().for_each(|t| *t = t.clamp(lo, hi));
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    /// Forward-difference gradient components of a raw slice.
    pub(crate) fn gradient(&self, theta: &[f64]) -> Vec<Vec<f64>> {
        (0..self.grid.dim())
            .map(|k| {
                let mut out = vec![0.0; theta.len()];
                grid::forward_diff(&self.grid, k, theta, &mut out);
                out
            })
            .collect()
    }

    /// Per-cell flux `a q/√(|q|²+μ²) + 2b q` of the smoothed integrand
    /// `a(√(|q|²+μ²) - μ) + b|q|²`; `μ = 0` uses `a q/|q|` (zero at `q = 0`).
    ///
    /// The result is a feasible dual point, which is how every solver gets a
    /// gap certificate.
    pub fn flux(&self, theta: &[f64], mu: f64) -> Vec<Vec<f64>> {
        let mut q = self.gradient(theta);
        for i in 0..theta.len() {
            let sq: f64 = q.iter().map(|c| c[i] * c[i]).sum();
            let s = (sq + mu * mu).sqrt();
            let t = if s > 0.0 { self.tv_weight[i] / s } else { 0.0 };
            for c in q.iter_mut() {
                c[i] *= t + 2.0 * self.quad_weight[i];
            }
        }
        q
    }

    /// Smoothed objective `P_μ`.
    pub fn smoothed_objective(&self, theta: &[f64], mu: f64) -> f64 {
        let q = self.gradient(theta);
        let mut total = 0.0;
        for i in 0..theta.len() {
            let sq: f64 = q.iter().map(|c| c[i] * c[i]).sum();
            let d = theta[i] - self.theta_prev[i];
            let huber = if sq > 0.0 { sq / ((sq + mu * mu).sqrt() + mu) } else { 0.0 };
            total += 0.5 * self.data_weight[i] * d * d + self.tv_weight[i] * huber + self.quad_weight[i] * sq;
        }
        total
    }

    /// Gradient of [`Self::smoothed_objective`]; with `μ = 0` a subgradient of `P`.
    pub fn smoothed_gradient(&self, theta: &[f64], mu: f64) -> Vec<f64> {
        let flux = self.flux(theta, mu);
        let mut out: Vec<f64> = theta
            .iter()
            .zip(&self.theta_prev)
            .zip(&self.data_weight)
            .map(|((t, p), m)| m * (t - p))
            .collect();
        let mut div = vec![0.0; theta.len()];
        for (k, comp) in flux.iter().enumerate() {
            grid::backward_diff_add(&self.grid, k, comp, &mut div);
        }
        out.iter_mut().zip(&div).for_each(|(o, d)| *o -= d);
        out
    }

    /// Strong-convexity modulus of the data term in the cell-sum metric.
    pub(crate) fn min_data_weight(&self) -> f64 {
        self.data_weight.iter().copied().fold(f64::INFINITY, f64::min)
    }
}
