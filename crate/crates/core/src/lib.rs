//! Virtual Hebb-Wagner micro-contact workbench.
//!
//! [`sim`] stands in for the cell, oven and electrometer; [`acquisition`]
//! drives it through a measurement campaign; [`analysis`] turns the I-V curve
//! into conductivity against oxygen activity; [`files`] and [`config`] cover
//! persistence.

// Validators write `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod analysis;
pub mod batch;
pub mod config;
pub mod error;
pub mod files;
pub mod format;
pub mod par;
pub mod physics;
pub mod sim;
pub mod workbench;

pub use config::CampaignConfig;
