use serde::{Deserialize, Serialize};

use crate::error::FieldError;

/// Steady-state detection and averaging parameters (all times in seconds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadyStateParams {
    /// Interval between threshold checks.
    pub np_s: u32,
    /// Averaging window of each check.
    pub nw_s: u32,
    #[serde(rename = "s_threshold_a", alias = "threshold_a")]
    pub threshold_a: f64,
    /// Number of 1 Hz samples averaged once steady.
    pub nm_s: u32,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
}

fn default_timeout() -> f64 {
    7200.0
}

impl Default for SteadyStateParams {
    fn default() -> Self {
        Self {
            np_s: 5,
            nw_s: 5,
            threshold_a: 3e-9,
            nm_s: 10,
            timeout_s: default_timeout(),
        }
    }
}

impl SteadyStateParams {
    pub fn validate(&self, prefix: &str) -> Vec<FieldError> {
        let mut errors = Vec::new();
        if self.np_s < 1 {
            errors.push(FieldError::new(format!("{prefix}.np_s"), "must be at least 1"));
        }
        if self.nw_s < 1 {
            errors.push(FieldError::new(format!("{prefix}.nw_s"), "must be at least 1"));
        }
        if !(self.threshold_a > 0.0 && self.threshold_a.is_finite()) {
            errors.push(FieldError::new(format!("{prefix}.s_threshold_a"), "must be positive"));
        }
        if self.nm_s < 1 {
            errors.push(FieldError::new(format!("{prefix}.nm_s"), "must be at least 1"));
        }
        if !(self.timeout_s > f64::from(self.np_s) + f64::from(self.nw_s)) {
            errors.push(FieldError::new(
                format!("{prefix}.timeout_s"),
                "must exceed np_s + nw_s",
            ));
        }
        errors
    }

    /// First check time: the smallest multiple of Np at which both windows exist.
    pub fn first_check_s(&self) -> u32 {
        let need = self.np_s + self.nw_s;
        need.div_ceil(self.np_s) * self.np_s
    }
}

/// Partial update of the live detection parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsPatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub np_s: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nw_s: Option<u32>,
    #[serde(
        default,
        rename = "s_threshold_a",
        alias = "threshold_a",
        skip_serializing_if = "Option::is_none"
    )]
    pub threshold_a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nm_s: Option<u32>,
}

impl ParamsPatch {
    pub fn is_empty(&self) -> bool {
        self.np_s.is_none() && self.nw_s.is_none() && self.threshold_a.is_none() && self.nm_s.is_none()
    }

    pub fn apply_to(&self, base: &SteadyStateParams) -> SteadyStateParams {
        SteadyStateParams {
            np_s: self.np_s.unwrap_or(base.np_s),
            nw_s: self.nw_s.unwrap_or(base.nw_s),
            threshold_a: self.threshold_a.unwrap_or(base.threshold_a),
            nm_s: self.nm_s.unwrap_or(base.nm_s),
            timeout_s: base.timeout_s,
        }
    }
}

/// Validates a patch against `current`, returning the parameters it would produce.
///
/// Invalid patches leave the caller's parameters untouched.
pub fn update_live_params(
    current: &SteadyStateParams,
    patch: &ParamsPatch,
) -> Result<SteadyStateParams, Vec<FieldError>> {
    let next = patch.apply_to(current);
    let errors = next.validate("params");
    if errors.is_empty() {
        Ok(next)
    } else {
        Err(errors)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanMode {
    /// Down to the negative extreme, up to the positive one, down to the end.
    Dud,
    /// Mirror of `Dud`.
    Udu,
}

impl std::str::FromStr for ScanMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dud" => Ok(ScanMode::Dud),
            "udu" => Ok(ScanMode::Udu),
            other => Err(format!("unknown scan mode `{other}` (expected dud or udu)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanPlan {
    pub v_start: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub v_end: f64,
    pub v_step: f64,
    pub mode: ScanMode,
}

/// Tolerance on voltage-grid arithmetic.
pub const VOLTAGE_EPS: f64 = 1e-9;

pub(crate) fn steps_between(from: f64, to: f64, step: f64) -> Option<u64> {
    let n = ((to - from).abs() / step).round();
    if ((to - from).abs() - n * step).abs() <= VOLTAGE_EPS {
        Some(n as u64)
    } else {
        None
    }
}

impl ScanPlan {
    pub fn validate(&self, prefix: &str) -> Vec<FieldError> {
        let mut errors = Vec::new();
        if !(self.v_step > 0.0 && self.v_step.is_finite()) {
            errors.push(FieldError::new(format!("{prefix}.v_step"), "must be positive"));
            return errors;
        }
        if !(self.v_min <= self.v_max) {
            errors.push(FieldError::new(format!("{prefix}.v_min"), "must not exceed v_max"));
            return errors;
        }
        for (name, v) in [("v_start", self.v_start), ("v_end", self.v_end)] {
            if !(self.v_min - VOLTAGE_EPS <= v && v <= self.v_max + VOLTAGE_EPS) {
                errors.push(FieldError::new(
                    format!("{prefix}.{name}"),
                    "must lie within [v_min, v_max]",
                ));
            }
        }
        let legs = [
            ("v_max", self.v_min, self.v_max),
            ("v_start", self.v_min, self.v_start),
            ("v_end", self.v_min, self.v_end),
        ];
        for (name, from, to) in legs {
            if steps_between(from, to, self.v_step).is_none() {
                errors.push(FieldError::new(
                    format!("{prefix}.{name}"),
                    "offset from v_min must be an integer multiple of v_step",
                ));
            }
        }
        errors
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureLoopParams {
    pub sp_cell_c: f64,
    pub ki: f64,
    #[serde(default = "default_tol")]
    pub tol_c: f64,
    #[serde(default = "default_drift")]
    pub drift_c: f64,
    #[serde(default = "default_adjust")]
    pub adjust_period_s: f64,
    #[serde(default = "default_oven_poll")]
    pub oven_poll_s: f64,
    /// Initial oven setpoint offset above the cell setpoint.
    #[serde(default)]
    pub sp_offset_c: f64,
    #[serde(default = "default_stab_timeout")]
    pub stabilization_timeout_s: f64,
}

fn default_tol() -> f64 {
    0.8
}
fn default_drift() -> f64 {
    0.15
}
fn default_adjust() -> f64 {
    300.0
}
fn default_oven_poll() -> f64 {
    60.0
}
fn default_stab_timeout() -> f64 {
    86_400.0
}

pub const SP_OVEN_MIN_C: f64 = 0.0;
pub const SP_OVEN_MAX_C: f64 = 1000.0;

impl TemperatureLoopParams {
    pub fn new(sp_cell_c: f64, ki: f64) -> Self {
        Self {
            sp_cell_c,
            ki,
            tol_c: default_tol(),
            drift_c: default_drift(),
            adjust_period_s: default_adjust(),
            oven_poll_s: default_oven_poll(),
            sp_offset_c: 0.0,
            stabilization_timeout_s: default_stab_timeout(),
        }
    }

    pub fn validate(&self, prefix: &str) -> Vec<FieldError> {
        let mut errors = Vec::new();
        if !(self.drift_c > 0.0) {
            errors.push(FieldError::new(format!("{prefix}.drift_c"), "must be positive"));
        }
        if !(self.tol_c > self.drift_c) {
            errors.push(FieldError::new(format!("{prefix}.tol_c"), "must exceed drift_c"));
        }
        if !(SP_OVEN_MIN_C..=SP_OVEN_MAX_C).contains(&self.sp_cell_c) {
            errors.push(FieldError::new(
                format!("{prefix}.sp_cell_c"),
                "must lie within [0, 1000] °C",
            ));
        }
        if !self.ki.is_finite() || self.ki < 0.0 {
            errors.push(FieldError::new(format!("{prefix}.ki"), "must be non-negative"));
        }
        for (name, v) in [
            ("adjust_period_s", self.adjust_period_s),
            ("oven_poll_s", self.oven_poll_s),
            ("stabilization_timeout_s", self.stabilization_timeout_s),
        ] {
            if !(v >= 1.0 && v.is_finite()) {
                errors.push(FieldError::new(format!("{prefix}.{name}"), "must be at least 1 s"));
            }
        }
        errors
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let p = SteadyStateParams::default();
        assert_eq!((p.np_s, p.nw_s, p.threshold_a), (5, 5, 3e-9));
        assert!(p.validate("steady_state").is_empty());
    }

    #[test]
    fn first_check_waits_for_both_windows() {
        let mut p = SteadyStateParams::default();
        assert_eq!(p.first_check_s(), 10);
        p.nw_s = 7;
        assert_eq!(p.first_check_s(), 15);
        p.np_s = 8;
        p.nw_s = 2;
        assert_eq!(p.first_check_s(), 16);
    }

    #[test]
    fn empty_patch_is_noop() {
        let p = SteadyStateParams::default();
        let patch = ParamsPatch::default();
        assert!(patch.is_empty());
        assert_eq!(update_live_params(&p, &patch).unwrap(), p);
    }

    #[test]
    fn zero_window_is_rejected() {
        let p = SteadyStateParams::default();
        let patch = ParamsPatch {
            nw_s: Some(0),
            ..Default::default()
        };
        let errs = update_live_params(&p, &patch).unwrap_err();
        assert_eq!(errs[0].field, "params.nw_s");
    }

    #[test]
    fn patch_json_uses_threshold_name() {
        let patch: ParamsPatch = serde_json::from_str(r#"{"s_threshold_a": 1e-8}"#).unwrap();
        assert_eq!(patch.threshold_a, Some(1e-8));
        assert!(serde_json::from_str::<ParamsPatch>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn plan_validation() {
        let good = ScanPlan {
            v_start: 0.0,
            v_min: -0.6,
            v_max: 0.6,
            v_end: 0.0,
            v_step: 0.01,
            mode: ScanMode::Dud,
        };
        assert!(good.validate("scan").is_empty());
        let off_grid = ScanPlan { v_end: 0.005, ..good };
        assert_eq!(off_grid.validate("scan")[0].field, "scan.v_end");
        let outside = ScanPlan { v_start: 0.7, ..good };
        assert!(!outside.validate("scan").is_empty());
    }

    #[test]
    fn loop_tolerances_are_ordered() {
        let mut t = TemperatureLoopParams::new(700.0, 0.5);
        assert!(t.validate("temperature").is_empty());
        t.drift_c = 1.0;
        assert_eq!(t.validate("temperature")[0].field, "temperature.tol_c");
    }
}
