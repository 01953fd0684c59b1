//! Ground-truth electrical response of the blocking-contact cell.

use serde::{Deserialize, Serialize};

use crate::error::{FieldError, PhysicsError};
use crate::physics::{activity_exponent, nernst_activity, CellGeometry, PhysicalConstants, ReferenceAtmosphere};

/// Hidden conductivity model: σₑ(a) = σn·(a/a_ref)^m_n + σp·(a/a_ref)^m_p.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthCell {
    pub sigma_n_ref: f64,
    pub sigma_p_ref: f64,
    #[serde(default = "default_slope_n")]
    pub slope_n: f64,
    #[serde(default = "default_slope_p")]
    pub slope_p: f64,
    pub a_ref: f64,
    #[serde(default = "default_tau")]
    pub tau_relax_s: f64,
    #[serde(default = "default_noise")]
    pub gaussian_noise_a: f64,
}

fn default_slope_n() -> f64 {
    -1.0 / 6.0
}
fn default_slope_p() -> f64 {
    1.0 / 6.0
}
fn default_tau() -> f64 {
    60.0
}
fn default_noise() -> f64 {
    0.2e-9
}

impl GroundTruthCell {
    /// Symmetric electron/hole model centred on the reference activity.
    pub fn symmetric(sigma_ref: f64, a_ref: f64) -> Self {
        Self {
            sigma_n_ref: sigma_ref,
            sigma_p_ref: sigma_ref,
            slope_n: default_slope_n(),
            slope_p: default_slope_p(),
            a_ref,
            tau_relax_s: default_tau(),
            gaussian_noise_a: default_noise(),
        }
    }

    pub fn validate(&self, prefix: &str) -> Vec<FieldError> {
        let mut errors = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                errors.push(FieldError::new(format!("{prefix}.{name}"), "must be positive"));
            }
        };
        positive("sigma_n_ref", self.sigma_n_ref);
        positive("sigma_p_ref", self.sigma_p_ref);
        positive("a_ref", self.a_ref);
        positive("tau_relax_s", self.tau_relax_s);
        if !(self.gaussian_noise_a >= 0.0) {
            errors.push(FieldError::new(
                format!("{prefix}.gaussian_noise_a"),
                "must be non-negative",
            ));
        }
        if !(self.slope_n < 0.0) {
            errors.push(FieldError::new(format!("{prefix}.slope_n"), "must be negative"));
        }
        if !(self.slope_p > 0.0) {
            errors.push(FieldError::new(format!("{prefix}.slope_p"), "must be positive"));
        }
        errors
    }

    /// Electronic conductivity at a given oxygen activity.
    pub fn sigma_e(&self, a_o2: f64) -> f64 {
        let x = a_o2 / self.a_ref;
        self.sigma_n_ref * x.powf(self.slope_n) + self.sigma_p_ref * x.powf(self.slope_p)
    }

    pub fn sigma_at_voltage(
        &self,
        e_app: f64,
        reference: &ReferenceAtmosphere,
        consts: &PhysicalConstants,
    ) -> Result<f64, PhysicsError> {
        Ok(self.sigma_e(nernst_activity(e_app, reference, consts)?))
    }
}

/// ∫₀ᴱ c·exp(m·k·E′) dE′ written to stay accurate near E = 0.
fn power_term_integral(coeff: f64, slope: f64, k: f64, e_app: f64) -> f64 {
    let mk = slope * k;
    if mk == 0.0 {
        coeff * e_app
    } else {
        coeff * (mk * e_app).exp_m1() / mk
    }
}

/// Steady-state (Hebb-Wagner) current at an applied voltage.
pub fn steady_current(
    e_app: f64,
    cell: &GroundTruthCell,
    reference: &ReferenceAtmosphere,
    geom: &CellGeometry,
    consts: &PhysicalConstants,
) -> Result<f64, PhysicsError> {
    reference.check()?;
    geom.check()?;
    activity_exponent(e_app, reference, consts)?;
    let k = consts.z_electrons() / consts.thermal_voltage(reference.temperature_k);
    let offset = reference.a_o2_reversible / cell.a_ref;
    let n = power_term_integral(cell.sigma_n_ref * offset.powf(cell.slope_n), cell.slope_n, k, e_app);
    let p = power_term_integral(cell.sigma_p_ref * offset.powf(cell.slope_p), cell.slope_p, k, e_app);
    Ok(geom.spreading_factor() * (n + p))
}

/// Current `t_s` seconds after switching from `e_prev` to `e_new`.
pub fn transient_current(
    t_s: f64,
    e_prev: f64,
    e_new: f64,
    cell: &GroundTruthCell,
    reference: &ReferenceAtmosphere,
    geom: &CellGeometry,
    consts: &PhysicalConstants,
) -> Result<f64, PhysicsError> {
    let from = steady_current(e_prev, cell, reference, geom, consts)?;
    let to = steady_current(e_new, cell, reference, geom, consts)?;
    Ok(relax(from, to, t_s, cell.tau_relax_s))
}

pub(crate) fn relax(from: f64, to: f64, t_s: f64, tau_s: f64) -> f64 {
    to + (from - to) * (-t_s.max(0.0) / tau_s).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (GroundTruthCell, ReferenceAtmosphere, CellGeometry, PhysicalConstants) {
        (
            GroundTruthCell::symmetric(1e-4, 0.21),
            ReferenceAtmosphere::air_at_700c(),
            CellGeometry::micro_contact(),
            PhysicalConstants::CODATA,
        )
    }

    /// Composite Simpson quadrature, independent of the closed form.
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let inner: f64 = (1..n)
            .map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 })
            .sum();
        h / 3.0 * (f(a) + inner + f(b))
    }

    fn quadrature_current(e: f64) -> f64 {
        let (cell, r, g, c) = setup();
        let integrand = |x: f64| cell.sigma_at_voltage(x, &r, &c).unwrap();
        g.spreading_factor() * simpson(&integrand, 0.0, e, 20_000)
    }

    #[test]
    fn zero_voltage_gives_zero_current() {
        let (cell, r, g, c) = setup();
        assert_eq!(steady_current(0.0, &cell, &r, &g, &c).unwrap(), 0.0);
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let (cell, r, g, c) = setup();
        // mpmath 40-digit quadrature values for σn = σp = 1e-4 S/m, a = 100 µm.
        let frozen = [
            (0.2, 3.714_379_865_208_585e-8),
            (-0.35, -1.272_187_328_663_718e-7),
            (0.6, 9.318_048_806_621_01e-7),
        ];
        for (e, expected) in frozen {
            let i = steady_current(e, &cell, &r, &g, &c).unwrap();
            assert!(((i - expected) / expected).abs() < 1e-9, "E={e}: {i} vs {expected}");
            let q = quadrature_current(e);
            assert!(((i - q) / q).abs() < 1e-9, "E={e}: {i} vs simpson {q}");
        }
    }

    #[test]
    fn derivative_matches_local_conductance() {
        let (cell, r, g, c) = setup();
        let h = 1e-5;
        for e in [-0.55, -0.2, -0.01, 0.0, 0.03, 0.3, 0.58] {
            let up = steady_current(e + h, &cell, &r, &g, &c).unwrap();
            let down = steady_current(e - h, &cell, &r, &g, &c).unwrap();
            let numeric = (up - down) / (2.0 * h);
            let exact = g.spreading_factor() * cell.sigma_at_voltage(e, &r, &c).unwrap();
            assert!(((numeric - exact) / exact).abs() < 1e-6, "E={e}");
        }
    }

    #[test]
    fn symmetric_cell_gives_odd_current() {
        let (cell, r, g, c) = setup();
        for e in [0.05, 0.2, 0.6] {
            let p = steady_current(e, &cell, &r, &g, &c).unwrap();
            let n = steady_current(-e, &cell, &r, &g, &c).unwrap();
            assert!((p + n).abs() <= 1e-15 * p.abs());
        }
    }

    #[test]
    fn transient_endpoints() {
        let (cell, r, g, c) = setup();
        let from = steady_current(-0.1, &cell, &r, &g, &c).unwrap();
        let to = steady_current(0.2, &cell, &r, &g, &c).unwrap();
        let start = transient_current(0.0, -0.1, 0.2, &cell, &r, &g, &c).unwrap();
        assert!((start - from).abs() <= 1e-15 * from.abs());
        let late = transient_current(1e6, -0.1, 0.2, &cell, &r, &g, &c).unwrap();
        assert_eq!(late, to);
        let at_tau = transient_current(cell.tau_relax_s, -0.1, 0.2, &cell, &r, &g, &c).unwrap();
        let expect = to + (from - to) / std::f64::consts::E;
        assert!((at_tau - expect).abs() < 1e-15 * to.abs().max(1e-12));
    }

    #[test]
    fn overflowing_voltage_is_rejected() {
        let (cell, r, g, c) = setup();
        assert!(steady_current(20.0, &cell, &r, &g, &c).is_err());
    }

    #[test]
    fn validation_names_fields() {
        let mut cell = GroundTruthCell::symmetric(1e-4, 0.21);
        cell.slope_n = 0.1;
        cell.tau_relax_s = 0.0;
        let errs = cell.validate("cell");
        let names: Vec<_> = errs.iter().map(|e| e.field.as_str()).collect();
        assert!(names.contains(&"cell.slope_n"));
        assert!(names.contains(&"cell.tau_relax_s"));
    }
}
