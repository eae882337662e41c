//! Potential and mobility settings, their derived constants, and the
//! runtime check of the sign conditions at the box corners.

mod mobility;
mod potential;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use mobility::{
    ConstantMobility, KobayashiMobility, Mobility, MobilityBounds, MobilityFactory,
    MobilityRegistry, MobilityValues,
};
pub use potential::{
    LogarithmicWell, ObstacleWell, PolynomialWell, Potential, PotentialFactory,
    PotentialRegistry,
};

/// Lattice resolution used for the C² norm and `c*`.
pub const C2_LATTICE: usize = 401;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown potential setting `{0}`")]
    UnknownPotential(String),
    #[error("unknown mobility kind `{0}`")]
    UnknownMobility(String),
    #[error("invalid `{key}`: {reason}")]
    InvalidParameter { key: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    /// Registry name: `g1`, `g2` or `g3` (or a registered extension).
    pub setting: String,
    pub c: f64,
    pub u: f64,
    pub o_star: f64,
    pub iota_star: f64,
}

impl PotentialSpec {
    pub fn new(setting: &str, c: f64, u: f64, o_star: f64, iota_star: f64) -> Self {
        Self {
            setting: setting.to_string(),
            c,
            u,
            o_star,
            iota_star,
        }
    }

    /// `c = 1`, `u = 0`, `[o*, ι*] = [0, 1]`.
    pub fn standard(setting: &str) -> Self {
        Self::new(setting, 1.0, 0.0, 0.0, 1.0)
    }

    pub fn build(&self, registry: &PotentialRegistry) -> Result<Arc<dyn Potential>, ModelError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(ModelError::InvalidParameter {
                key: "c",
                reason: format!("must be positive, got {}", self.c),
            });
        }
        if !self.u.is_finite() {
            return Err(ModelError::InvalidParameter {
                key: "u",
                reason: "must be finite".into(),
            });
        }
        if !(0.0 <= self.o_star && self.o_star < self.iota_star && self.iota_star <= 1.0) {
            return Err(ModelError::InvalidParameter {
                key: "o_star",
                reason: format!(
                    "need 0 <= o_star < iota_star <= 1, got [{}, {}]",
                    self.o_star, self.iota_star
                ),
            });
        }
        let potential: Arc<dyn Potential> = registry
            .create(&self.setting, self.c, self.u)
            .ok_or_else(|| ModelError::UnknownPotential(self.setting.clone()))?
            .into();
        for (key, value) in [("o_star", self.o_star), ("iota_star", self.iota_star)] {
            if potential.gamma_subdifferential(value).is_none() {
                return Err(ModelError::InvalidParameter {
                    key,
                    reason: format!(
                        "{value} is outside the domain of the subdifferential of gamma for {}",
                        potential.name()
                    ),
                });
            }
        }
        Ok(potential)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilitySpec {
    /// Registry name: `constant` or `kobayashi`.
    pub kind: String,
    pub kappa: f64,
    pub a0: f64,
    pub a: f64,
    pub b: f64,
}

impl MobilitySpec {
    pub fn constant(a0: f64, a: f64, b: f64) -> Self {
        Self {
            kind: "constant".into(),
            kappa: 0.0,
            a0,
            a,
            b,
        }
    }

    pub fn kobayashi(kappa: f64) -> Self {
        Self {
            kind: "kobayashi".into(),
            kappa,
            a0: 1.0,
            a: 1.0,
            b: 1.0,
        }
    }
}

/// Lattice estimate of `|g(·; u)|_{C²([0,1]²)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct C2Estimate {
    pub value: f64,
    /// Points per axis of the sampling lattice.
    pub resolution: usize,
}

/// Largest absolute eigenvalue of a symmetric 2×2 matrix.
pub fn spectral_norm_2x2(m: [[f64; 2]; 2]) -> f64 {
    let mean = 0.5 * (m[0][0] + m[1][1]);
    let half_diff = 0.5 * (m[0][0] - m[1][1]);
    mean.abs() + (half_diff * half_diff + m[0][1] * m[1][0]).max(0.0).sqrt()
}

/// Sup over an `n × n` lattice of `[0,1]²` of `max(|g|, |∇g|, ‖∇²g‖₂)`.
pub fn c2_norm_on_lattice(potential: &dyn Potential, n: usize) -> C2Estimate {
    assert!(n >= 2);
    let step = 1.0 / (n - 1) as f64;
    let mut sup = 0.0_f64;
    for i in 0..n {
        let w = i as f64 * step;
        for j in 0..n {
            let eta = j as f64 * step;
            let [gw, ge] = potential.grad_g(w, eta);
            sup = sup
                .max(potential.g(w, eta).abs())
                .max(gw.hypot(ge))
                .max(spectral_norm_2x2(potential.hess_g(w, eta)));
        }
    }
    C2Estimate {
        value: sup,
        resolution: n,
    }
}

pub fn estimate_c2_norm(spec: &PotentialSpec) -> Result<C2Estimate, ModelError> {
    let potential = spec.build(&PotentialRegistry::default())?;
    Ok(c2_norm_on_lattice(potential.as_ref(), C2_LATTICE))
}

/// Lattice minimum of `γ(w) + g(w, η)` on `[0,1]²`.
pub fn sample_lower_bound(potential: &dyn Potential, n: usize) -> f64 {
    let step = 1.0 / (n - 1) as f64;
    let mut inf = f64::INFINITY;
    for i in 0..n {
        let w = i as f64 * step;
        let gamma = potential.gamma(w);
        for j in 0..n {
            inf = inf.min(gamma + potential.g(w, j as f64 * step));
        }
    }
    inf
}

/// One pass/fail line of a validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub conditions: Vec<Condition>,
}

impl ValidationReport {
    pub fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.conditions.push(Condition {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Condition> {
        self.conditions.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.conditions {
            writeln!(
                f,
                "{} {}: {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            )?;
        }
        Ok(())
    }
}

/// A fully resolved model: potential, mobilities and the derived constants
/// the scheme needs. Immutable and cheap to clone.
#[derive(Clone)]
pub struct ModelSpec {
    potential_spec: PotentialSpec,
    mobility_spec: MobilitySpec,
    potential: Arc<dyn Potential>,
    mobility: Arc<dyn Mobility>,
    c2: C2Estimate,
    c_star: f64,
    bounds: MobilityBounds,
}

impl ModelSpec {
    pub fn new(potential: PotentialSpec, mobility: MobilitySpec) -> Result<Self, ModelError> {
        Self::with_registries(
            potential,
            mobility,
            &PotentialRegistry::default(),
            &MobilityRegistry::default(),
        )
    }

    pub fn with_registries(
        potential_spec: PotentialSpec,
        mobility_spec: MobilitySpec,
        potentials: &PotentialRegistry,
        mobilities: &MobilityRegistry,
    ) -> Result<Self, ModelError> {
        let potential = potential_spec.build(potentials)?;
        let mobility: Arc<dyn Mobility> = mobilities.create(&mobility_spec)?.into();
        let c2 = c2_norm_on_lattice(potential.as_ref(), C2_LATTICE);
        let c_star = sample_lower_bound(potential.as_ref(), C2_LATTICE);
        let bounds = mobility.bounds();
        Ok(Self {
            potential_spec,
            mobility_spec,
            potential,
            mobility,
            c2,
            c_star,
            bounds,
        })
    }

    pub fn potential(&self) -> &dyn Potential {
        self.potential.as_ref()
    }

    pub fn mobility(&self) -> &dyn Mobility {
        self.mobility.as_ref()
    }

    pub fn potential_spec(&self) -> &PotentialSpec {
        &self.potential_spec
    }

    pub fn mobility_spec(&self) -> &MobilitySpec {
        &self.mobility_spec
    }

    /// `L = |g(·; u)|_{C²([0,1]²)}`.
    pub fn c2_norm(&self) -> f64 {
        self.c2.value
    }

    pub fn c2_estimate(&self) -> C2Estimate {
        self.c2
    }

    /// Sampled lower bound of `γ + g` on `[0,1]²`.
    pub fn c_star(&self) -> f64 {
        self.c_star
    }

    pub fn mobility_bounds(&self) -> MobilityBounds {
        self.bounds
    }

    pub fn o_star(&self) -> f64 {
        self.potential_spec.o_star
    }

    pub fn iota_star(&self) -> f64 {
        self.potential_spec.iota_star
    }

    /// Positivity infimum required for the given `ν`: `δ₁` for `ν > 0`,
    /// `δ₀` for `ν = 0`.
    pub fn positivity_floor(&self, nu: f64) -> f64 {
        if nu > 0.0 {
            self.bounds.delta1
        } else {
            self.bounds.delta0
        }
    }

    /// Whether the mobility floor hypothesis holds for this `ν`.
    pub fn check_positivity(&self, nu: f64) -> ValidationReport {
        let mut report = ValidationReport::default();
        let (label, value) = if nu > 0.0 {
            ("delta1", self.bounds.delta1)
        } else {
            ("delta0", self.bounds.delta0)
        };
        report.push(
            format!("{label} > 0"),
            value > 0.0,
            format!("{label} = {value:e}"),
        );
        report.push(
            "mobility within hypotheses",
            self.mobility.within_hypotheses(),
            if self.mobility.within_hypotheses() {
                "ok".to_string()
            } else {
                "outside theorem hypotheses (zero floor)".to_string()
            },
        );
        report
    }

    /// A short human-readable label, e.g. `g1/kobayashi`.
    pub fn label(&self) -> String {
        format!("{}/{}", self.potential.name(), self.mobility.name())
    }
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("potential", &self.potential_spec)
            .field("mobility", &self.mobility_spec)
            .field("c2_norm", &self.c2.value)
            .field("c_star", &self.c_star)
            .finish()
    }
}

const A4_TOL: f64 = 1e-12;

/// Evaluates the corner sign conditions at `(o*, 0)` and `(ι*, 1)`.
pub fn check_a4(model: &ModelSpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    let pot = model.potential();
    let mob = model.mobility();
    let (o, iota) = (model.o_star(), model.iota_star());

    let [gw_lo, geta_lo] = pot.grad_g(o, 0.0);
    match pot.gamma_subdifferential(o) {
        Some((lo, _)) => report.push(
            "subdiff gamma(o*) meets (-inf, -g_w(o*,0)]",
            lo <= -gw_lo + A4_TOL,
            format!("min subgradient {lo:e}, bound {:e}", -gw_lo),
        ),
        None => report.push(
            "subdiff gamma(o*) meets (-inf, -g_w(o*,0)]",
            false,
            format!("subdifferential empty at o* = {o}"),
        ),
    }
    report.push(
        "g_eta(o*,0) <= 0",
        geta_lo <= A4_TOL,
        format!("{geta_lo:e}"),
    );

    let [gw_hi, geta_hi] = pot.grad_g(iota, 1.0);
    match pot.gamma_subdifferential(iota) {
        Some((_, hi)) => report.push(
            "subdiff gamma(iota*) meets [-g_w(iota*,1), inf)",
            hi >= -gw_hi - A4_TOL,
            format!("max subgradient {hi:e}, bound {:e}", -gw_hi),
        ),
        None => report.push(
            "subdiff gamma(iota*) meets [-g_w(iota*,1), inf)",
            false,
            format!("subdifferential empty at iota* = {iota}"),
        ),
    }
    report.push(
        "g_eta(iota*,1) >= 0",
        geta_hi >= -A4_TOL,
        format!("{geta_hi:e}"),
    );

    let low = mob.eval(o, 0.0);
    let high = mob.eval(iota, 1.0);
    for (name, value) in [
        ("alpha_w(o*,0) <= 0", low.grad_a[0]),
        ("alpha_eta(o*,0) <= 0", low.grad_a[1]),
        ("beta_w(o*,0) <= 0", low.grad_b[0]),
        ("beta_eta(o*,0) <= 0", low.grad_b[1]),
    ] {
        report.push(name, value <= A4_TOL, format!("{value:e}"));
    }
    for (name, value) in [
        ("alpha_w(iota*,1) >= 0", high.grad_a[0]),
        ("alpha_eta(iota*,1) >= 0", high.grad_a[1]),
        ("beta_w(iota*,1) >= 0", high.grad_b[0]),
        ("beta_eta(iota*,1) >= 0", high.grad_b[1]),
    ] {
        report.push(name, value >= -A4_TOL, format!("{value:e}"));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(setting: &str, o: f64, iota: f64, mobility: MobilitySpec) -> ModelSpec {
        ModelSpec::new(PotentialSpec::new(setting, 1.0, 0.0, o, iota), mobility).unwrap()
    }

    #[test]
    fn spectral_norm_matches_eigenvalues() {
        let golden = 0.5 * (1.0 + 5f64.sqrt());
        assert!((spectral_norm_2x2([[0.0, -1.0], [-1.0, 1.0]]) - golden).abs() < 1e-15);
        assert_eq!(spectral_norm_2x2([[1.0, -1.0], [-1.0, 1.0]]), 2.0);
        assert_eq!(spectral_norm_2x2([[-3.0, 0.0], [0.0, 1.0]]), 3.0);
    }

    #[test]
    fn c2_norm_for_quadratic_settings_is_analytic() {
        // Hessian [[1-c, -1], [-1, 1]] with c = 1 dominates value and gradient.
        let golden = 0.5 * (1.0 + 5f64.sqrt());
        for setting in ["g2", "g3"] {
            let est = estimate_c2_norm(&PotentialSpec::new(setting, 1.0, 0.0, 0.1, 0.9)).unwrap();
            assert!((est.value - golden).abs() < 1e-14, "{setting}: {}", est.value);
            assert_eq!(est.resolution, C2_LATTICE);
        }
    }

    #[test]
    fn c2_norm_coupling_only_limit() {
        // As c -> 0 only the coupling term remains; its Hessian has norm 2.
        let est = estimate_c2_norm(&PotentialSpec::new("g1", 1e-12, 0.0, 0.0, 1.0)).unwrap();
        assert!((est.value - 2.0).abs() < 1e-9);
    }

    #[test]
    fn c2_norm_is_resolution_stable() {
        for c in [0.5, 1.0, 4.0, 10.0] {
            let pot = PolynomialWell { c, u: 0.1 };
            let coarse = c2_norm_on_lattice(&pot, 401).value;
            let fine = c2_norm_on_lattice(&pot, 801).value;
            assert!(((fine - coarse) / fine).abs() < 1e-3, "c={c}");
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(PotentialSpec::new("g1", 0.0, 0.0, 0.0, 1.0)
            .build(&PotentialRegistry::default())
            .is_err());
        assert!(PotentialSpec::new("g1", 1.0, 0.0, 0.6, 0.4)
            .build(&PotentialRegistry::default())
            .is_err());
        // log barrier needs o*, iota* strictly inside (0, 1)
        assert!(PotentialSpec::new("g2", 1.0, 0.0, 0.0, 0.9)
            .build(&PotentialRegistry::default())
            .is_err());
        assert!(matches!(
            PotentialSpec::standard("g7").build(&PotentialRegistry::default()),
            Err(ModelError::UnknownPotential(_))
        ));
    }

    #[test]
    fn a4_obstacle_with_kobayashi_passes() {
        let report = check_a4(&model("g3", 0.0, 1.0, MobilitySpec::kobayashi(0.0)));
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn a4_polynomial_passes_with_equality() {
        let m = model("g1", 0.0, 1.0, MobilitySpec::kobayashi(0.01));
        assert_eq!(m.potential().grad_g(0.0, 0.0)[0], 0.0);
        let report = check_a4(&m);
        assert!(report.passed(), "{report}");
        assert!(report.get("beta_w(o*,0) <= 0").unwrap().passed);
        assert!(report.get("alpha_eta(o*,0) <= 0").unwrap().passed);
    }

    #[test]
    fn a4_logarithmic_depends_on_corners_and_mobility() {
        // With c = 1, u = 0 the barrier condition needs o* <= 1/(1+e) and iota* >= e/(1+e).
        let ok = model("g2", 0.1, 0.9, MobilitySpec::constant(1.0, 1.0, 1.0));
        assert!(check_a4(&ok).passed());
        let bad = model("g2", 0.4, 0.9, MobilitySpec::constant(1.0, 1.0, 1.0));
        assert!(!check_a4(&bad).passed());
        // beta_w(o*, 0) = o* > 0 for the Kobayashi mobility
        let kob = model("g2", 0.1, 0.9, MobilitySpec::kobayashi(0.01));
        let report = check_a4(&kob);
        assert!(!report.get("beta_w(o*,0) <= 0").unwrap().passed);
    }

    #[test]
    fn positivity_floor_flags_unsafeguarded_kobayashi() {
        let m = model("g1", 0.0, 1.0, MobilitySpec::kobayashi(0.0));
        assert!(!m.check_positivity(0.1).passed());
        let m = model("g1", 0.0, 1.0, MobilitySpec::kobayashi(0.01));
        assert!(m.check_positivity(0.1).passed());
        assert_eq!(m.positivity_floor(0.0), 0.005);
    }

    #[test]
    fn c_star_is_a_lower_bound_on_the_lattice() {
        let m = model("g2", 0.1, 0.9, MobilitySpec::constant(1.0, 1.0, 1.0));
        let pot = m.potential();
        for i in 0..=50 {
            for j in 0..=50 {
                let (w, eta) = (i as f64 / 50.0, j as f64 / 50.0);
                assert!(pot.gamma(w) + pot.g(w, eta) >= m.c_star() - 1e-15);
            }
        }
    }
}
