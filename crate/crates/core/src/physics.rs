//! Physical constants, cell geometry and the closed-form relations linking
//! applied voltage, oxygen activity and electronic conductivity.
//!
//! All quantities are SI: volts, amperes, metres, siemens per metre, kelvin.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{FieldError, PhysicsError};

/// Largest admissible |zEF/RT| before the activity mapping is refused.
pub const MAX_EXPONENT: f64 = 700.0;

pub const ZERO_CELSIUS_K: f64 = 273.15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    faraday: f64,
    gas_constant: f64,
    z_electrons: f64,
}

impl PhysicalConstants {
    pub const CODATA: PhysicalConstants = PhysicalConstants {
        faraday: 96485.332,
        gas_constant: 8.31446,
        z_electrons: 4.0,
    };

    pub fn faraday(&self) -> f64 {
        self.faraday
    }

    pub fn gas_constant(&self) -> f64 {
        self.gas_constant
    }

    pub fn z_electrons(&self) -> f64 {
        self.z_electrons
    }

    /// R·T/F in volts.
    pub fn thermal_voltage(&self, temperature_k: f64) -> f64 {
        self.gas_constant * temperature_k / self.faraday
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::CODATA
    }
}

/// Micro-contact cell: hemispherical blocking contact on a thick electrolyte.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellGeometry {
    pub contact_radius_m: f64,
    pub reversible_electrode_radius_m: f64,
    pub electrolyte_thickness_m: f64,
}

impl CellGeometry {
    pub fn new(
        contact_radius_m: f64,
        reversible_electrode_radius_m: f64,
        electrolyte_thickness_m: f64,
    ) -> Result<Self, PhysicsError> {
        let geom = Self {
            contact_radius_m,
            reversible_electrode_radius_m,
            electrolyte_thickness_m,
        };
        geom.check()?;
        Ok(geom)
    }

    /// The 100 µm contact on a 2 mm pellet with a 4 mm counter electrode.
    pub fn micro_contact() -> Self {
        Self {
            contact_radius_m: 100e-6,
            reversible_electrode_radius_m: 4e-3,
            electrolyte_thickness_m: 2e-3,
        }
    }

    pub fn check(&self) -> Result<(), PhysicsError> {
        match self.validate("geometry").first() {
            Some(e) => Err(PhysicsError::Geometry(e.to_string())),
            None => Ok(()),
        }
    }

    pub fn validate(&self, prefix: &str) -> Vec<FieldError> {
        let mut errors = Vec::new();
        if !(self.contact_radius_m > 0.0 && self.contact_radius_m.is_finite()) {
            errors.push(FieldError::new(
                format!("{prefix}.contact_radius_m"),
                "must be positive",
            ));
        }
        if !(self.reversible_electrode_radius_m > 0.0) {
            errors.push(FieldError::new(
                format!("{prefix}.reversible_electrode_radius_m"),
                "must be positive",
            ));
        }
        if !(self.electrolyte_thickness_m > 0.0) {
            errors.push(FieldError::new(
                format!("{prefix}.electrolyte_thickness_m"),
                "must be positive",
            ));
        } else if self.contact_radius_m > self.electrolyte_thickness_m / 10.0 {
            errors.push(FieldError::new(
                format!("{prefix}.contact_radius_m"),
                "must not exceed a tenth of the electrolyte thickness",
            ));
        }
        errors
    }

    /// The geometric factor 2πa linking conductivity and conductance.
    pub fn spreading_factor(&self) -> f64 {
        2.0 * PI * self.contact_radius_m
    }
}

/// Oxygen activity fixed by the reversible electrode, and the cell temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceAtmosphere {
    pub a_o2_reversible: f64,
    pub temperature_k: f64,
}

impl ReferenceAtmosphere {
    pub fn new(a_o2_reversible: f64, temperature_k: f64) -> Result<Self, PhysicsError> {
        let r = Self {
            a_o2_reversible,
            temperature_k,
        };
        r.check()?;
        Ok(r)
    }

    /// Air at 700 °C.
    pub fn air_at_700c() -> Self {
        Self {
            a_o2_reversible: 0.21,
            temperature_k: 973.15,
        }
    }

    pub fn check(&self) -> Result<(), PhysicsError> {
        if !(self.a_o2_reversible > 0.0 && self.a_o2_reversible.is_finite()) {
            return Err(PhysicsError::Domain {
                quantity: "a_o2_reversible",
                value: self.a_o2_reversible,
            });
        }
        if !(self.temperature_k > 0.0 && self.temperature_k.is_finite()) {
            return Err(PhysicsError::Domain {
                quantity: "temperature_k",
                value: self.temperature_k,
            });
        }
        Ok(())
    }

    pub fn validate(&self, prefix: &str) -> Vec<FieldError> {
        let mut errors = Vec::new();
        if !(self.a_o2_reversible > 0.0 && self.a_o2_reversible.is_finite()) {
            errors.push(FieldError::new(format!("{prefix}.a_o2_reversible"), "must be positive"));
        }
        if !(self.temperature_k > 0.0 && self.temperature_k.is_finite()) {
            errors.push(FieldError::new(format!("{prefix}.temperature_k"), "must be positive"));
        }
        errors
    }
}

/// zEF/RT for the applied voltage, rejected past [`MAX_EXPONENT`].
pub fn activity_exponent(
    e_app: f64,
    reference: &ReferenceAtmosphere,
    consts: &PhysicalConstants,
) -> Result<f64, PhysicsError> {
    let exponent = consts.z_electrons * e_app / consts.thermal_voltage(reference.temperature_k);
    if !exponent.is_finite() || exponent.abs() > MAX_EXPONENT {
        return Err(PhysicsError::Range {
            voltage: e_app,
            exponent: exponent.abs(),
        });
    }
    Ok(exponent)
}

/// Oxygen activity at the blocking contact for an applied voltage.
pub fn nernst_activity(
    e_app: f64,
    reference: &ReferenceAtmosphere,
    consts: &PhysicalConstants,
) -> Result<f64, PhysicsError> {
    reference.check()?;
    let exponent = activity_exponent(e_app, reference, consts)?;
    let a = reference.a_o2_reversible * exponent.exp();
    if !(a.is_finite() && a > 0.0) {
        return Err(PhysicsError::Range {
            voltage: e_app,
            exponent: exponent.abs(),
        });
    }
    Ok(a)
}

/// Applied voltage that sets the contact activity to `a1`.
pub fn nernst_voltage(
    a1: f64,
    reference: &ReferenceAtmosphere,
    consts: &PhysicalConstants,
) -> Result<f64, PhysicsError> {
    if !(a1 > 0.0) {
        return Err(PhysicsError::Domain {
            quantity: "oxygen activity",
            value: a1,
        });
    }
    reference.check()?;
    let vt = consts.thermal_voltage(reference.temperature_k) / consts.z_electrons;
    Ok(vt * (a1 / reference.a_o2_reversible).ln())
}

/// Resistance of the semi-infinite electrolyte under the micro contact.
pub fn spreading_resistance(geom: &CellGeometry, sigma_e: f64) -> Result<f64, PhysicsError> {
    geom.check()?;
    if !(sigma_e > 0.0) {
        return Err(PhysicsError::Domain {
            quantity: "sigma_e",
            value: sigma_e,
        });
    }
    Ok(1.0 / (geom.spreading_factor() * sigma_e))
}

/// Electronic conductivity from the local slope of the I-V curve.
///
/// Zero and negative slopes pass through unchanged.
pub fn conductivity_from_derivative(di_de: f64, geom: &CellGeometry) -> Result<f64, PhysicsError> {
    geom.check()?;
    Ok(di_de / geom.spreading_factor())
}

pub fn celsius_to_kelvin(c: f64) -> f64 {
    c + ZERO_CELSIUS_K
}

#[cfg(test)]
mod tests {
    use super::*;

    const T700: f64 = 973.15;

    fn air() -> ReferenceAtmosphere {
        ReferenceAtmosphere::new(0.21, T700).unwrap()
    }

    #[test]
    fn constants_are_codata() {
        let c = PhysicalConstants::default();
        assert_eq!(c.faraday(), 96485.332);
        assert_eq!(c.gas_constant(), 8.31446);
        assert_eq!(c.z_electrons(), 4.0);
    }

    #[test]
    fn zero_voltage_returns_reference_activity() {
        let a = nernst_activity(0.0, &air(), &PhysicalConstants::CODATA).unwrap();
        assert_eq!(a, 0.21);
    }

    #[test]
    fn activity_at_100_mv() {
        // 40-digit evaluation of 0.21*exp(4*0.1*F/(R*973.15))
        let expected = 24.760_068_976_149_473;
        let a = nernst_activity(0.1, &air(), &PhysicalConstants::CODATA).unwrap();
        assert!(((a - expected) / expected).abs() < 1e-13, "{a}");
    }

    #[test]
    fn opposite_voltages_multiply_to_reference_squared() {
        let c = PhysicalConstants::CODATA;
        for e in [0.013, 0.25, 0.6] {
            let p = nernst_activity(e, &air(), &c).unwrap() * nernst_activity(-e, &air(), &c).unwrap();
            assert!((p / (0.21 * 0.21) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn voltage_of_reference_activity_is_zero() {
        assert_eq!(nernst_voltage(0.21, &air(), &PhysicalConstants::CODATA).unwrap(), 0.0);
    }

    #[test]
    fn voltage_forced_to_one_volt() {
        let c = PhysicalConstants::CODATA;
        let t = c.faraday() / c.gas_constant();
        let r = ReferenceAtmosphere::new(0.5, t).unwrap();
        let v = nernst_voltage(0.5 * 4f64.exp(), &r, &c).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn nonpositive_activity_is_a_domain_error() {
        let c = PhysicalConstants::CODATA;
        assert!(matches!(
            nernst_voltage(0.0, &air(), &c),
            Err(PhysicsError::Domain { .. })
        ));
        assert!(nernst_voltage(-1.0, &air(), &c).is_err());
    }

    #[test]
    fn extreme_voltage_is_a_range_error_naming_it() {
        let err = nernst_activity(20.0, &air(), &PhysicalConstants::CODATA).unwrap_err();
        match err {
            PhysicsError::Range { voltage, .. } => assert_eq!(voltage, 20.0),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("20"));
    }

    #[test]
    fn spreading_resistance_of_100um_contact() {
        let g = CellGeometry::micro_contact();
        let r = spreading_resistance(&g, 1.0).unwrap();
        assert!((r - 1_591.549_430_918_953_4).abs() < 1e-9);
        let g2 = CellGeometry::new(200e-6, 4e-3, 2e-3).unwrap();
        let r2 = spreading_resistance(&g2, 1.0).unwrap();
        assert!((r2 * 2.0 - r).abs() < 1e-12);
        assert!((r * 2.0 * PI * g.contact_radius_m - 1.0).abs() < 1e-15);
    }

    #[test]
    fn spreading_resistance_rejects_nonpositive_sigma() {
        let g = CellGeometry::micro_contact();
        assert!(spreading_resistance(&g, 0.0).is_err());
        assert!(spreading_resistance(&g, -1e-3).is_err());
    }

    #[test]
    fn conductivity_from_derivative_cases() {
        let g = CellGeometry::micro_contact();
        assert_eq!(conductivity_from_derivative(0.0, &g).unwrap(), 0.0);
        let one = conductivity_from_derivative(2.0 * PI * g.contact_radius_m, &g).unwrap();
        assert!((one - 1.0).abs() < 1e-15);
        assert!(conductivity_from_derivative(-1e-9, &g).unwrap() < 0.0);
    }

    #[test]
    fn ohmic_curve_recovers_sigma() {
        let g = CellGeometry::micro_contact();
        for sigma in [1e-7, 3.3e-4, 2.0] {
            let r = spreading_resistance(&g, sigma).unwrap();
            // I = E / R is linear, so dI/dE = 1/R exactly.
            let back = conductivity_from_derivative(1.0 / r, &g).unwrap();
            assert!(((back - sigma) / sigma).abs() < 4.0 * f64::EPSILON);
        }
    }

    #[test]
    fn geometry_rejects_thick_contact() {
        assert!(CellGeometry::new(0.0, 4e-3, 2e-3).is_err());
        assert!(CellGeometry::new(3e-4, 4e-3, 2e-3).is_err());
        assert!(CellGeometry::new(2e-4, 4e-3, 2e-3).is_ok());
    }

    #[test]
    fn activity_span_over_600_mv() {
        let c = PhysicalConstants::CODATA;
        let lo = nernst_activity(-0.6, &air(), &c).unwrap();
        let hi = nernst_activity(0.6, &air(), &c).unwrap();
        let decades = (hi / lo).log10();
        // 4.8·F/(R·T·ln 10) evaluated at 40 digits
        assert!((decades - 24.858_390_665_586_108).abs() < 1e-9);
        assert!(decades > 24.0);
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn activity_voltage_round_trip(e in -1.5f64..1.5, t in 500.0f64..1500.0, a2 in 1e-6f64..1.0) {
            let c = PhysicalConstants::CODATA;
            let r = ReferenceAtmosphere::new(a2, t).unwrap();
            let a = nernst_activity(e, &r, &c).unwrap();
            prop_assert!(a > 0.0);
            let back = nernst_voltage(a, &r, &c).unwrap();
            prop_assert!((back - e).abs() <= 1e-12 * e.abs().max(1e-3));
        }

        #[test]
        fn activity_is_strictly_increasing(e in -1.0f64..1.0, de in 1e-6f64..0.1) {
            let c = PhysicalConstants::CODATA;
            let r = ReferenceAtmosphere::air_at_700c();
            prop_assert!(nernst_activity(e + de, &r, &c).unwrap() > nernst_activity(e, &r, &c).unwrap());
        }
    }
}
