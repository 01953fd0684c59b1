//! Virtual hardware: cell, oven heater, electrometer.

pub mod cell;
pub mod electrometer;
pub mod heater;
pub mod plant;

pub use cell::{steady_current, transient_current, GroundTruthCell};
pub use electrometer::{ElectrometerModel, MedianWindow};
pub use heater::{heater_disturbance, thermal_step, DutyMode, HeaterModel, ThermalState};
pub use plant::{CurrentSample, Plant, PlantSetup, NS_PER_S};
