//! Mobility functions `α₀`, `α`, `β`.

use std::collections::BTreeMap;
use std::fmt;

use super::{MobilitySpec, ModelError};

/// Values and gradients of the three mobilities at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityValues {
    pub a0: f64,
    pub a: f64,
    pub b: f64,
    pub grad_a: [f64; 2],
    pub grad_b: [f64; 2],
}

/// Infima and suprema over `[0, 1]²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityBounds {
    /// `inf min(α₀, α)`
    pub delta0: f64,
    /// `inf min(α₀, β)`
    pub delta1: f64,
    /// `inf α₀`
    pub a0_inf: f64,
    pub alpha_sup: f64,
    pub beta_sup: f64,
}

pub trait Mobility: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    fn eval(&self, w: f64, eta: f64) -> MobilityValues;

    /// Global bounds on the spectral norms of the Hessians of `α` and `β`.
    fn hessian_bounds(&self) -> [f64; 2];

    /// False when the configuration lies outside the positivity hypotheses
    /// (e.g. an unsafeguarded Kobayashi mobility).
    fn within_hypotheses(&self) -> bool {
        true
    }

    /// Lattice sample of the bounds on `[0, 1]²`.
    fn bounds(&self) -> MobilityBounds {
        sampled_bounds(self, 201)
    }
}

pub(crate) fn sampled_bounds<M: Mobility + ?Sized>(mobility: &M, n: usize) -> MobilityBounds {
    let mut out = MobilityBounds {
        delta0: f64::INFINITY,
        delta1: f64::INFINITY,
        a0_inf: f64::INFINITY,
        alpha_sup: f64::NEG_INFINITY,
        beta_sup: f64::NEG_INFINITY,
    };
    let step = 1.0 / (n - 1) as f64;
    for i in 0..n {
        for j in 0..n {
            let m = mobility.eval(i as f64 * step, j as f64 * step);
            out.delta0 = out.delta0.min(m.a0.min(m.a));
            out.delta1 = out.delta1.min(m.a0.min(m.b));
            out.a0_inf = out.a0_inf.min(m.a0);
            out.alpha_sup = out.alpha_sup.max(m.a);
            out.beta_sup = out.beta_sup.max(m.b);
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantMobility {
    pub a0: f64,
    pub a: f64,
    pub b: f64,
}

impl Mobility for ConstantMobility {
    fn name(&self) -> &'static str {
        "constant"
    }

    fn eval(&self, _w: f64, _eta: f64) -> MobilityValues {
        MobilityValues {
            a0: self.a0,
            a: self.a,
            b: self.b,
            grad_a: [0.0, 0.0],
            grad_b: [0.0, 0.0],
        }
    }

    fn hessian_bounds(&self) -> [f64; 2] {
        [0.0, 0.0]
    }

    fn bounds(&self) -> MobilityBounds {
        MobilityBounds {
            delta0: self.a0.min(self.a),
            delta1: self.a0.min(self.b),
            a0_inf: self.a0,
            alpha_sup: self.a,
            beta_sup: self.b,
        }
    }
}

/// `α₀ = α = (η² + κ)/2`, `β = (w² + κ)/2`. With `κ = 0` this is the
/// original Kobayashi choice, which vanishes on the axes.
#[derive(Debug, Clone, Copy)]
pub struct KobayashiMobility {
    pub kappa: f64,
}

impl Mobility for KobayashiMobility {
    fn name(&self) -> &'static str {
        "kobayashi"
    }

    fn eval(&self, w: f64, eta: f64) -> MobilityValues {
        let a = 0.5 * (eta * eta + self.kappa);
        MobilityValues {
            a0: a,
            a,
            b: 0.5 * (w * w + self.kappa),
            grad_a: [0.0, eta],
            grad_b: [w, 0.0],
        }
    }

    fn hessian_bounds(&self) -> [f64; 2] {
        [1.0, 1.0]
    }

    fn within_hypotheses(&self) -> bool {
        self.kappa > 0.0
    }

    fn bounds(&self) -> MobilityBounds {
        let floor = 0.5 * self.kappa;
        let top = 0.5 * (1.0 + self.kappa);
        MobilityBounds {
            delta0: floor,
            delta1: floor,
            a0_inf: floor,
            alpha_sup: top,
            beta_sup: top,
        }
    }
}

pub type MobilityFactory = fn(&MobilitySpec) -> Result<Box<dyn Mobility>, ModelError>;

/// Name-keyed table of mobility constructors.
#[derive(Clone)]
pub struct MobilityRegistry {
    factories: BTreeMap<String, MobilityFactory>,
}

impl MobilityRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, factory: MobilityFactory) {
        self.factories.insert(name.to_ascii_lowercase(), factory);
    }

    pub fn create(&self, spec: &MobilitySpec) -> Result<Box<dyn Mobility>, ModelError> {
        let factory = self
            .factories
            .get(&spec.kind.to_ascii_lowercase())
            .ok_or_else(|| ModelError::UnknownMobility(spec.kind.clone()))?;
        factory(spec)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}

fn constant_factory(spec: &MobilitySpec) -> Result<Box<dyn Mobility>, ModelError> {
    if !(spec.a0 > 0.0 && spec.a0.is_finite()) {
        return Err(ModelError::InvalidParameter {
            key: "a0",
            reason: format!("must be positive, got {}", spec.a0),
        });
    }
    for (key, value) in [("a", spec.a), ("b", spec.b)] {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(ModelError::InvalidParameter {
                key,
                reason: format!("must be nonnegative, got {value}"),
            });
        }
    }
    Ok(Box::new(ConstantMobility {
        a0: spec.a0,
        a: spec.a,
        b: spec.b,
    }))
}

fn kobayashi_factory(spec: &MobilitySpec) -> Result<Box<dyn Mobility>, ModelError> {
    if !(spec.kappa >= 0.0 && spec.kappa.is_finite()) {
        return Err(ModelError::InvalidParameter {
            key: "kappa",
            reason: format!("must be nonnegative, got {}", spec.kappa),
        });
    }
    Ok(Box::new(KobayashiMobility { kappa: spec.kappa }))
}

impl Default for MobilityRegistry {
    fn default() -> Self {
        let mut registry = Self::empty();
        registry.register("constant", constant_factory);
        registry.register("kobayashi", kobayashi_factory);
        registry
    }
}

impl fmt::Debug for MobilityRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.factories.keys()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kobayashi_values() {
        let m = KobayashiMobility { kappa: 0.0 }.eval(1.0, 1.0);
        assert_eq!((m.a0, m.a, m.b), (0.5, 0.5, 0.5));
        let safe = KobayashiMobility { kappa: 0.02 };
        let m = safe.eval(0.0, 0.0);
        assert_eq!((m.a0, m.a, m.b), (0.01, 0.01, 0.01));
        assert_eq!(safe.bounds().delta1, 0.01);
        assert!(!KobayashiMobility { kappa: 0.0 }.within_hypotheses());
    }

    #[test]
    fn constant_values() {
        let m = ConstantMobility { a0: 1.0, a: 1.0, b: 1.0 }.eval(0.3, -4.0);
        assert_eq!(
            m,
            MobilityValues {
                a0: 1.0,
                a: 1.0,
                b: 1.0,
                grad_a: [0.0, 0.0],
                grad_b: [0.0, 0.0]
            }
        );
    }

    #[test]
    fn analytic_bounds_match_sampling() {
        let k = KobayashiMobility { kappa: 0.01 };
        let sampled = sampled_bounds(&k, 101);
        let exact = k.bounds();
        assert!((sampled.delta1 - exact.delta1).abs() < 1e-15);
        assert!((sampled.beta_sup - exact.beta_sup).abs() < 1e-15);
    }

    #[test]
    fn registry_rejects_bad_parameters() {
        let registry = MobilityRegistry::default();
        let mut spec = MobilitySpec::constant(1.0, 1.0, 1.0);
        spec.a0 = 0.0;
        assert!(registry.create(&spec).is_err());
        let mut spec = MobilitySpec::kobayashi(0.01);
        spec.kind = "anisotropic".into();
        assert!(matches!(registry.create(&spec), Err(ModelError::UnknownMobility(_))));
    }
}
