//! Oven heater: PWM duty, the magnetic disturbance it couples into the
//! current measurement, and the first-order oven/cell thermal plant.

use serde::{Deserialize, Serialize};

use crate::error::FieldError;

/// How the temperature controller chooses the PWM duty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DutyMode {
    /// Proportional band around the oven setpoint, with a feed-forward reset.
    #[default]
    Regulated,
    /// `duty_fraction` held constant whatever the temperatures.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeaterModel {
    pub cycle_time_s: f64,
    pub duty_fraction: f64,
    pub disturbance_amp_a: f64,
    pub disturbance_sign: i8,
    pub oven_tau_s: f64,
    pub cell_tau_s: f64,
    pub gain_c_per_unit_power: f64,
    pub ambient_c: f64,
    pub couple_offset_c: f64,
    #[serde(default = "default_band")]
    pub proportional_band_c: f64,
    #[serde(default)]
    pub duty_mode: DutyMode,
}

fn default_band() -> f64 {
    50.0
}

impl HeaterModel {
    /// Controller with a 2 s cycle, short enough for a 2.2 s median window.
    pub fn fixed_cycle() -> Self {
        Self {
            cycle_time_s: 2.0,
            duty_fraction: 0.0,
            disturbance_amp_a: 100e-9,
            disturbance_sign: 1,
            oven_tau_s: 600.0,
            cell_tau_s: 300.0,
            gain_c_per_unit_power: 2000.0,
            ambient_c: 25.0,
            couple_offset_c: 5.0,
            proportional_band_c: default_band(),
            duty_mode: DutyMode::Regulated,
        }
    }

    /// The original 10 s controller cycle.
    pub fn legacy_cycle() -> Self {
        Self {
            cycle_time_s: 10.0,
            ..Self::fixed_cycle()
        }
    }

    pub fn validate(&self, prefix: &str) -> Vec<FieldError> {
        let mut errors = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                errors.push(FieldError::new(format!("{prefix}.{name}"), "must be positive"));
            }
        };
        positive("cycle_time_s", self.cycle_time_s);
        positive("oven_tau_s", self.oven_tau_s);
        positive("cell_tau_s", self.cell_tau_s);
        positive("gain_c_per_unit_power", self.gain_c_per_unit_power);
        positive("proportional_band_c", self.proportional_band_c);
        if !(0.0..=1.0).contains(&self.duty_fraction) {
            errors.push(FieldError::new(format!("{prefix}.duty_fraction"), "must lie in [0, 1]"));
        }
        if !(self.disturbance_amp_a >= 0.0) {
            errors.push(FieldError::new(
                format!("{prefix}.disturbance_amp_a"),
                "must be non-negative",
            ));
        }
        if self.disturbance_sign != 1 && self.disturbance_sign != -1 {
            errors.push(FieldError::new(
                format!("{prefix}.disturbance_sign"),
                "must be +1 or -1",
            ));
        }
        errors
    }

    pub fn cycle_ns(&self) -> u64 {
        secs_to_ns(self.cycle_time_s)
    }

    /// Heater-on time per cycle.
    pub fn t_on_s(&self) -> f64 {
        self.duty_fraction * self.cycle_time_s
    }

    fn t_on_ns(&self) -> u64 {
        (self.duty_fraction * self.cycle_ns() as f64).round() as u64
    }

    /// Whether the PWM output is on at absolute virtual time `t_ns`.
    pub fn is_on_at(&self, t_ns: u64) -> bool {
        let cycle = self.cycle_ns();
        self.duty_fraction > 0.0 && cycle > 0 && t_ns % cycle < self.t_on_ns()
    }

    /// Duty the controller would pick at the start of a cycle.
    pub fn controller_duty(&self, sp_oven_c: f64, oven_c: f64) -> f64 {
        match self.duty_mode {
            DutyMode::Fixed => self.duty_fraction,
            DutyMode::Regulated => {
                let reset = ((sp_oven_c - self.ambient_c) / self.gain_c_per_unit_power).clamp(0.0, 1.0);
                (reset + (sp_oven_c - oven_c) / self.proportional_band_c).clamp(0.0, 1.0)
            }
        }
    }
}

pub(crate) fn secs_to_ns(s: f64) -> u64 {
    (s * 1e9).round().max(0.0) as u64
}

/// Additive current offset induced by the heater at absolute time `t_s`.
pub fn heater_disturbance(t_s: f64, heater: &HeaterModel) -> f64 {
    if heater.is_on_at(secs_to_ns(t_s)) {
        f64::from(heater.disturbance_sign) * heater.disturbance_amp_a
    } else {
        0.0
    }
}

/// Oven and cell temperatures plus the duty currently in force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalState {
    pub oven_c: f64,
    pub cell_c: f64,
    pub duty: f64,
    pub elapsed_ns: u64,
    /// PWM cycle in which `duty` was last chosen; `None` forces a choice.
    pub duty_cycle: Option<u64>,
}

impl ThermalState {
    pub fn at(oven_c: f64, cell_c: f64) -> Self {
        Self {
            oven_c,
            cell_c,
            duty: 0.0,
            elapsed_ns: 0,
            duty_cycle: None,
        }
    }
}

/// One explicit Euler step of the oven/cell plant.
///
/// The duty is re-evaluated only when the step starts in a new PWM cycle.
pub fn thermal_step(state: &ThermalState, heater: &HeaterModel, sp_oven_c: f64, dt_s: f64) -> ThermalState {
    let cycle = heater.cycle_ns().max(1);
    let idx = state.elapsed_ns / cycle;
    let duty = if state.duty_cycle == Some(idx) {
        state.duty
    } else {
        heater.controller_duty(sp_oven_c, state.oven_c)
    };
    let drive = heater.ambient_c + heater.gain_c_per_unit_power * duty;
    let oven = state.oven_c + dt_s * (drive - state.oven_c) / heater.oven_tau_s;
    let target_cell = state.oven_c - heater.couple_offset_c;
    let cell = state.cell_c + dt_s * (target_cell - state.cell_c) / heater.cell_tau_s;
    ThermalState {
        oven_c: oven,
        cell_c: cell,
        duty,
        elapsed_ns: state.elapsed_ns + secs_to_ns(dt_s),
        duty_cycle: Some(idx),
    }
}
