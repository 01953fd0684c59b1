//! The virtual instrument rack: cell, oven and electrometer advanced on one
//! integer-nanosecond clock.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::cell::{relax, steady_current, GroundTruthCell};
use super::electrometer::{ElectrometerModel, MedianWindow};
use super::heater::{secs_to_ns, thermal_step, HeaterModel, ThermalState};
use crate::error::PhysicsError;
use crate::physics::{CellGeometry, PhysicalConstants, ReferenceAtmosphere};

pub const NS_PER_S: u64 = 1_000_000_000;

/// One electrometer reading as seen by the acquisition software.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurrentSample {
    /// Virtual seconds since the current voltage was applied.
    pub t_s: f64,
    pub raw_a: f64,
    pub filtered_a: f64,
    pub cell_temp_c: f64,
    pub heater_on: bool,
}

#[derive(Debug, Clone, Copy)]
struct Reading {
    at_ns: u64,
    raw_a: f64,
    filtered_a: f64,
    heater_on: bool,
}

#[derive(Debug, Clone, Copy)]
struct Applied {
    from_a: f64,
    to_a: f64,
    voltage: f64,
    since_ns: u64,
}

#[derive(Debug, Clone)]
pub struct PlantSetup {
    pub geometry: CellGeometry,
    pub atmosphere: ReferenceAtmosphere,
    pub cell: GroundTruthCell,
    pub heater: HeaterModel,
    pub electrometer: ElectrometerModel,
    pub seed: u64,
    pub initial: ThermalState,
}

/// Deterministic simulation of everything the acquisition software talks to.
#[derive(Debug, Clone)]
pub struct Plant {
    geometry: CellGeometry,
    atmosphere: ReferenceAtmosphere,
    consts: PhysicalConstants,
    cell: GroundTruthCell,
    heater: HeaterModel,
    electrometer: ElectrometerModel,
    thermal: ThermalState,
    sp_oven_c: f64,
    window: MedianWindow,
    rng: ChaCha8Rng,
    clock_ns: u64,
    ts_ns: u64,
    applied: Applied,
    latest: Option<Reading>,
}

impl Plant {
    pub fn new(setup: PlantSetup) -> Self {
        let ts_ns = secs_to_ns(setup.electrometer.sampling_period_s).max(1);
        let sp = setup.initial.oven_c;
        let mut heater = setup.heater;
        let mut thermal = setup.initial;
        thermal.elapsed_ns = 0;
        thermal.duty_cycle = None;
        thermal.duty = heater.controller_duty(sp, thermal.oven_c);
        heater.duty_fraction = thermal.duty;
        Self {
            geometry: setup.geometry,
            atmosphere: setup.atmosphere,
            consts: PhysicalConstants::CODATA,
            cell: setup.cell,
            heater,
            electrometer: setup.electrometer,
            thermal,
            sp_oven_c: sp,
            window: MedianWindow::new(setup.electrometer.median_rank),
            rng: ChaCha8Rng::seed_from_u64(setup.seed),
            clock_ns: 0,
            ts_ns,
            applied: Applied {
                from_a: 0.0,
                to_a: 0.0,
                voltage: 0.0,
                since_ns: 0,
            },
            latest: None,
        }
    }

    pub fn now_ns(&self) -> u64 {
        self.clock_ns
    }

    pub fn now_s(&self) -> f64 {
        self.clock_ns as f64 / NS_PER_S as f64
    }

    pub fn oven_c(&self) -> f64 {
        self.thermal.oven_c
    }

    pub fn cell_c(&self) -> f64 {
        self.thermal.cell_c
    }

    pub fn sp_oven_c(&self) -> f64 {
        self.sp_oven_c
    }

    /// The heater as currently driven (duty in force this cycle).
    pub fn heater(&self) -> &HeaterModel {
        &self.heater
    }

    pub fn electrometer(&self) -> &ElectrometerModel {
        &self.electrometer
    }

    pub fn applied_voltage(&self) -> f64 {
        self.applied.voltage
    }

    /// Sends a new setpoint to the temperature controller.
    pub fn set_oven_setpoint(&mut self, sp_c: f64) {
        self.sp_oven_c = sp_c;
    }

    /// Switches the electrometer source to `e_new`.
    pub fn apply_voltage(&mut self, e_new: f64) -> Result<(), PhysicsError> {
        let to_a = steady_current(e_new, &self.cell, &self.atmosphere, &self.geometry, &self.consts)?;
        let from_a = steady_current(
            self.applied.voltage,
            &self.cell,
            &self.atmosphere,
            &self.geometry,
            &self.consts,
        )?;
        self.applied = Applied {
            from_a,
            to_a,
            voltage: e_new,
            since_ns: self.clock_ns,
        };
        Ok(())
    }

    pub fn since_applied_s(&self) -> f64 {
        (self.clock_ns - self.applied.since_ns) as f64 / NS_PER_S as f64
    }

    /// Advances one electrometer sampling period.
    pub fn step(&mut self) {
        let dt_s = self.ts_ns as f64 / NS_PER_S as f64;
        self.thermal = thermal_step(&self.thermal, &self.heater, self.sp_oven_c, dt_s);
        self.heater.duty_fraction = self.thermal.duty;
        self.clock_ns += self.ts_ns;

        let t_rel = (self.clock_ns - self.applied.since_ns) as f64 / NS_PER_S as f64;
        let ideal = relax(self.applied.from_a, self.applied.to_a, t_rel, self.cell.tau_relax_s);
        let heater_on = self.heater.is_on_at(self.clock_ns);
        let disturbance = if heater_on {
            f64::from(self.heater.disturbance_sign) * self.heater.disturbance_amp_a
        } else {
            0.0
        };
        // Drawn on every step so noise streams line up across configurations.
        let z: f64 = self.rng.sample(StandardNormal);
        let raw_a = ideal + disturbance + z * self.cell.gaussian_noise_a;
        let filtered_a = self.window.push(raw_a);
        self.latest = Some(Reading {
            at_ns: self.clock_ns,
            raw_a,
            filtered_a,
            heater_on,
        });
    }

    /// Runs the clock forward until no further sample fits before `t_ns`.
    pub fn advance_to(&mut self, t_ns: u64) {
        while self.clock_ns + self.ts_ns <= t_ns {
            self.step();
        }
    }

    pub fn advance_by_s(&mut self, secs: f64) {
        let target = self.clock_ns + secs_to_ns(secs);
        self.advance_to(target);
    }

    /// Most recent electrometer output, stamped relative to voltage application.
    pub fn electrometer_read(&self) -> CurrentSample {
        let (raw_a, filtered_a, heater_on, at_ns) = match self.latest {
            Some(r) => (r.raw_a, r.filtered_a, r.heater_on, r.at_ns),
            None => (0.0, 0.0, false, self.clock_ns),
        };
        CurrentSample {
            t_s: at_ns.saturating_sub(self.applied.since_ns) as f64 / NS_PER_S as f64,
            raw_a,
            filtered_a,
            cell_temp_c: self.thermal.cell_c,
            heater_on,
        }
    }

    /// Raw values currently held by the median window, oldest first.
    pub fn median_window(&self) -> Vec<f64> {
        self.window.contents().collect()
    }
}
