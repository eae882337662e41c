//! Double-well settings: the convex part `γ` and the smooth part `g`.

use std::collections::BTreeMap;
use std::fmt;

/// One double-well setting `G(w, η; u) = γ(w) + g(w, η; u)`.
///
/// `γ` is proper, l.s.c. and convex on ℝ and may take the value `+∞`;
/// `g` is C² on ℝ².
pub trait Potential: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// `γ(w)`, `+∞` outside the effective domain.
    fn gamma(&self, w: f64) -> f64;

    /// `∂γ(w)` as a closed interval `[lo, hi]` (bounds may be infinite),
    /// `None` when empty.
    fn gamma_subdifferential(&self, w: f64) -> Option<(f64, f64)>;

    /// Resolvent `argmin_x (x - r)² / (2λ) + γ(x)`.
    fn gamma_prox(&self, lambda: f64, r: f64) -> f64;

    fn g(&self, w: f64, eta: f64) -> f64;

    fn grad_g(&self, w: f64, eta: f64) -> [f64; 2];

    fn hess_g(&self, w: f64, eta: f64) -> [[f64; 2]; 2];
}

/// (g1): `γ ≡ 0` with a quartic well.
#[derive(Debug, Clone, Copy)]
pub struct PolynomialWell {
    pub c: f64,
    pub u: f64,
}

impl Potential for PolynomialWell {
    fn name(&self) -> &'static str {
        "g1"
    }

    fn gamma(&self, _w: f64) -> f64 {
        0.0
    }

    fn gamma_subdifferential(&self, _w: f64) -> Option<(f64, f64)> {
        Some((0.0, 0.0))
    }

    fn gamma_prox(&self, _lambda: f64, r: f64) -> f64 {
        r
    }

    fn g(&self, w: f64, eta: f64) -> f64 {
        let quartic = 0.25 * w * w * (w - 1.0) * (w - 1.0);
        let tilt = self.u * w * w * (w / 3.0 - 0.5);
        self.c * (quartic - tilt) + 0.5 * (w - eta) * (w - eta)
    }

    fn grad_g(&self, w: f64, eta: f64) -> [f64; 2] {
        [
            self.c * w * (w - 1.0) * (w - 0.5 - self.u) + (w - eta),
            eta - w,
        ]
    }

    fn hess_g(&self, w: f64, _eta: f64) -> [[f64; 2]; 2] {
        let gww = self.c * (3.0 * w * w - 3.0 * w + 0.5 - self.u * (2.0 * w - 1.0)) + 1.0;
        [[gww, -1.0], [-1.0, 1.0]]
    }
}

/// Concave quadratic shared by (g2) and (g3).
fn concave_g(c: f64, u: f64, w: f64, eta: f64) -> f64 {
    let s = w - u - 0.5;
    -0.5 * c * s * s + 0.5 * (w - eta) * (w - eta)
}

fn concave_grad_g(c: f64, u: f64, w: f64, eta: f64) -> [f64; 2] {
    [-c * (w - u - 0.5) + (w - eta), eta - w]
}

/// (g2): logarithmic barrier on `(0, 1)`, with `γ(0) = γ(1) = 1`.
#[derive(Debug, Clone, Copy)]
pub struct LogarithmicWell {
    pub c: f64,
    pub u: f64,
}

impl LogarithmicWell {
    const PROX_TOL: f64 = 1e-12;
    const PROX_MAX_ITERS: usize = 200;
    /// Smallest and largest representable points of `(0, 1)`.
    const INTERIOR: (f64, f64) = (f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);

    fn derivative(w: f64) -> f64 {
        0.5 * (w / (1.0 - w)).ln()
    }
}

impl Potential for LogarithmicWell {
    fn name(&self) -> &'static str {
        "g2"
    }

    fn gamma(&self, w: f64) -> f64 {
        if w == 0.0 || w == 1.0 {
            1.0
        } else if w > 0.0 && w < 1.0 {
            0.5 * (w * w.ln() + (1.0 - w) * (1.0 - w).ln())
        } else {
            f64::INFINITY
        }
    }

    fn gamma_subdifferential(&self, w: f64) -> Option<(f64, f64)> {
        (w > 0.0 && w < 1.0).then(|| {
            let s = Self::derivative(w);
            (s, s)
        })
    }

    /// Root of `x + (λ/2) ln(x / (1 - x)) = r` on `(0, 1)`.
    ///
    /// Bisection bracket with Newton proposals; a proposal is only taken
    /// when it lands strictly inside the current bracket.
    fn gamma_prox(&self, lambda: f64, r: f64) -> f64 {
        let residual = |x: f64| x + lambda * Self::derivative(x) - r;
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        let mut x = r.clamp(1e-3, 1.0 - 1e-3);
        for _ in 0..Self::PROX_MAX_ITERS {
            let f = residual(x);
            if f.abs() <= Self::PROX_TOL {
                return x;
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let slope = 1.0 + 0.5 * lambda / (x * (1.0 - x));
            let newton = x - f / slope;
            let next = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if next == x {
                break;
            }
            x = next.clamp(Self::INTERIOR.0, Self::INTERIOR.1);
        }
        x
    }

    fn g(&self, w: f64, eta: f64) -> f64 {
        concave_g(self.c, self.u, w, eta)
    }

    fn grad_g(&self, w: f64, eta: f64) -> [f64; 2] {
        concave_grad_g(self.c, self.u, w, eta)
    }

    fn hess_g(&self, _w: f64, _eta: f64) -> [[f64; 2]; 2] {
        [[1.0 - self.c, -1.0], [-1.0, 1.0]]
    }
}

/// (g3): indicator of `[0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct ObstacleWell {
    pub c: f64,
    pub u: f64,
}

impl Potential for ObstacleWell {
    fn name(&self) -> &'static str {
        "g3"
    }

    fn gamma(&self, w: f64) -> f64 {
        if (0.0..=1.0).contains(&w) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn gamma_subdifferential(&self, w: f64) -> Option<(f64, f64)> {
        if w == 0.0 {
            Some((f64::NEG_INFINITY, 0.0))
        } else if w == 1.0 {
            Some((0.0, f64::INFINITY))
        } else if w > 0.0 && w < 1.0 {
            Some((0.0, 0.0))
        } else {
            None
        }
    }

    fn gamma_prox(&self, _lambda: f64, r: f64) -> f64 {
        r.clamp(0.0, 1.0)
    }

    fn g(&self, w: f64, eta: f64) -> f64 {
        concave_g(self.c, self.u, w, eta)
    }

    fn grad_g(&self, w: f64, eta: f64) -> [f64; 2] {
        concave_grad_g(self.c, self.u, w, eta)
    }

    fn hess_g(&self, _w: f64, _eta: f64) -> [[f64; 2]; 2] {
        [[1.0 - self.c, -1.0], [-1.0, 1.0]]
    }
}

pub type PotentialFactory = fn(c: f64, u: f64) -> Box<dyn Potential>;

/// Name-keyed table of potential constructors.
#[derive(Clone)]
pub struct PotentialRegistry {
    factories: BTreeMap<String, PotentialFactory>,
}

impl PotentialRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, factory: PotentialFactory) {
        self.factories.insert(name.to_ascii_lowercase(), factory);
    }

    pub fn create(&self, name: &str, c: f64, u: f64) -> Option<Box<dyn Potential>> {
        self.factories
            .get(&name.to_ascii_lowercase())
            .map(|factory| factory(c, u))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}

impl Default for PotentialRegistry {
    fn default() -> Self {
        let mut registry = Self::empty();
        let polynomial: PotentialFactory = |c, u| Box::new(PolynomialWell { c, u });
        let logarithmic: PotentialFactory = |c, u| Box::new(LogarithmicWell { c, u });
        let obstacle: PotentialFactory = |c, u| Box::new(ObstacleWell { c, u });
        for (names, factory) in [
            (["g1", "polynomial"], polynomial),
            (["g2", "logarithmic"], logarithmic),
            (["g3", "indicator"], obstacle),
        ] {
            for name in names {
                registry.register(name, factory);
            }
        }
        registry
    }
}

impl fmt::Debug for PotentialRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.factories.keys()).finish()
    }
}
