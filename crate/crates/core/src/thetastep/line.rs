//! Exact finish for orientation problems on a line.
//!
//! On a line a minimiser is determined by which neighbouring cells are equal
//! and the signs of the remaining jumps. Given those, the values of the
//! merged segments solve a tridiagonal system, and the dual flux is a
//! running sum of `m (θ - θ_prev)`. Guessing the structure from an
//! approximate minimiser and checking both conditions yields the minimiser
//! up to round-off, with a dual point to prove it.

use super::ThetaProblem;

/// Thresholds, relative to the range of `θ_prev`, below which a jump is
/// treated as flat. Tried in order until one structure checks out.
const FLAT_TOLS: [f64; 5] = [1e-12, 1e-10, 1e-8, 1e-6, 1e-4];

/// Relative slack on `|p| ≤ a` for flat edges before the flux is projected.
const FEASIBILITY_SLACK: f64 = 1e-9;

/// Exact minimiser and dual point near `theta`, or `None` when no guessed
/// structure passes the optimality checks or the grid is not a line.
pub fn polish(problem: &ThetaProblem, theta: &[f64]) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
    if problem.grid.dim() != 1 || theta.len() != problem.len() || problem.len() < 2 {
        return None;
    }
    let (lo, hi) = problem.bounds;
    let scale = (hi - lo).max(f64::MIN_POSITIVE);
    // A structure that passes both checks satisfies the optimality
    // conditions, so it is the unique minimiser.
    FLAT_TOLS
        .iter()
        .find_map(|tol| attempt(problem, theta, tol * scale))
        .map(|(t, p)| (t, vec![p]))
}

fn attempt(problem: &ThetaProblem, theta: &[f64], flat_tol: f64) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = theta.len();
    let dx = problem.grid.dx();
    let m = &problem.data_weight;
    let a = &problem.tv_weight;
    let b = &problem.quad_weight;
    let prev = &problem.theta_prev;

    // Segments [start, end) and the sign of the jump after each one.
    let mut starts = vec![0];
    let mut signs = Vec::new();
    for e in 0..n - 1 {
        let jump = theta[e + 1] - theta[e];
        if jump.abs() > flat_tol {
            starts.push(e + 1);
            signs.push(jump.signum());
        }
    }
    let k = starts.len();
    let end = |g: usize| if g + 1 < k { starts[g + 1] } else { n };

    // (dx M_g + c_{g-1} + c_g) u_g - c_{g-1} u_{g-1} - c_g u_{g+1}
    //     = dx S_g + a_g s_g - a_{g-1} s_{g-1}
    // with c_g = 2 b_g / dx for the edge after segment g.
    let edge = |g: usize| end(g) - 1;
    let c: Vec<f64> = (0..k - 1).map(|g| 2.0 * b[edge(g)] / dx).collect();
    let mut diag = vec![0.0; k];
    let mut rhs = vec![0.0; k];
    for g in 0..k {
        let (mut mass, mut moment) = (0.0, 0.0);
        for i in starts[g]..end(g) {
            mass += m[i];
            moment += m[i] * prev[i];
        }
        diag[g] = dx * mass;
        rhs[g] = dx * moment;
        if g + 1 < k {
            diag[g] += c[g];
            rhs[g] += a[edge(g)] * signs[g];
        }
        if g > 0 {
            diag[g] += c[g - 1];
            rhs[g] -= a[edge(g - 1)] * signs[g - 1];
        }
    }
    let u = solve_tridiagonal(&diag, &c, &rhs)?;

    for g in 0..k - 1 {
        if !(signs[g] * (u[g + 1] - u[g]) > 0.0) {
            return None;
        }
    }
    let mut out = vec![0.0; n];
    for g in 0..k {
        out[starts[g]..end(g)].iter_mut().for_each(|t| *t = u[g]);
    }

    // Running-sum flux; flat edges must lie in [-a, a].
    let mut flux = vec![0.0; n];
    let mut acc = 0.0;
    for e in 0..n - 1 {
        acc += dx * m[e] * (out[e] - prev[e]);
        let flat = out[e + 1] == out[e];
        if flat {
            let cap = a[e];
            if acc.abs() > cap * (1.0 + FEASIBILITY_SLACK) + f64::MIN_POSITIVE {
                return None;
            }
            flux[e] = acc.clamp(-cap, cap);
        } else {
            let d = (out[e + 1] - out[e]) / dx;
            flux[e] = a[e] * d.signum() + 2.0 * b[e] * d;
        }
    }
    Some((out, flux))
}

/// Symmetric tridiagonal solve with diagonal `diag` and off-diagonal `-off`.
fn solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let k = diag.len();
    let mut d = diag.to_vec();
    let mut r = rhs.to_vec();
    for g in 1..k {
        if !(d[g - 1] > 0.0) {
            return None;
        }
        let w = off[g - 1] / d[g - 1];
        d[g] -= w * off[g - 1];
        r[g] += w * r[g - 1];
    }
    if !(d[k - 1] > 0.0) {
        return None;
    }
    let mut u = vec![0.0; k];
    u[k - 1] = r[k - 1] / d[k - 1];
    for g in (0..k - 1).rev() {
        u[g] = (r[g] + off[g] * u[g + 1]) / d[g];
    }
    u.iter().all(|v| v.is_finite()).then_some(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridSpec, ScalarField};

    #[test]
    fn tridiagonal_hand_case() {
        // [2 -1; -1 2] u = [1, 1] gives u = [1, 1].
        let u = solve_tridiagonal(&[2.0, 2.0], &[1.0], &[1.0, 1.0]).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-15 && (u[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn step_edge_with_strong_tv_flattens() {
        // Large α merges the two cells at the weighted mean.
        let grid = GridSpec::line(2, 1.0).unwrap();
        let prev = ScalarField::from_vec(grid, vec![0.0, 1.0]).unwrap();
        let p = ThetaProblem::from_mobilities(&prev, &[1.0, 3.0], &[10.0, 10.0], &[0.0, 0.0], 0.0, 1.0).unwrap();
        let (t, dual) = polish(&p, &[0.75, 0.75 + 1e-9]).unwrap();
        assert_eq!(t, vec![0.75, 0.75]);
        assert!((p.objective(&t) - p.dual_objective(&dual)).abs() < 1e-15);
    }

    #[test]
    fn refuses_planes() {
        let grid = GridSpec::plane(2, 2, 1.0).unwrap();
        let prev = ScalarField::zeros(grid);
        let p = ThetaProblem::from_mobilities(&prev, &[1.0; 4], &[1.0; 4], &[0.0; 4], 0.0, 1.0).unwrap();
        assert!(polish(&p, &[0.0; 4]).is_none());
    }
}
