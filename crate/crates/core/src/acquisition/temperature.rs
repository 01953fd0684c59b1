//! Oven and cell temperature stabilization ahead of a scan.

use std::ops::ControlFlow;

use super::params::{TemperatureLoopParams, SP_OVEN_MAX_C, SP_OVEN_MIN_C};
use crate::error::CampaignError;
use crate::sim::Plant;

/// One integral correction of the oven setpoint, clamped to [0, 1000] °C.
pub fn pi_regulate_step(sp_oven_c: f64, sp_cell_c: f64, t_cell_c: f64, ki: f64) -> f64 {
    (sp_oven_c + ki * (sp_cell_c - t_cell_c)).clamp(SP_OVEN_MIN_C, SP_OVEN_MAX_C)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StabilizeEvent {
    SetpointSent {
        t_s: f64,
        sp_oven_c: f64,
    },
    OvenCheck {
        t_s: f64,
        oven_c: f64,
        sp_oven_c: f64,
        within: bool,
    },
    CellCheck {
        t_s: f64,
        cell_c: f64,
        drift_c: f64,
        within: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stabilization {
    Stable {
        sp_oven_c: f64,
        cell_c: f64,
        drift_c: f64,
        pi_steps: u32,
        elapsed_s: f64,
    },
    Aborted,
}

/// Callback invoked once per virtual second (`None`) and on each check.
/// Returning `Break` aborts the procedure.
pub type StabilizeObserver<'a> = dyn FnMut(&Plant, Option<StabilizeEvent>) -> ControlFlow<()> + 'a;

struct Clock {
    start_s: f64,
    limit_s: f64,
}

fn wait(
    plant: &mut Plant,
    secs: f64,
    clock: &Clock,
    stage: &'static str,
    observer: &mut StabilizeObserver<'_>,
) -> Result<ControlFlow<()>, CampaignError> {
    let whole = secs.round().max(1.0) as u64;
    for _ in 0..whole {
        plant.advance_by_s(1.0);
        if observer(plant, None).is_break() {
            return Ok(ControlFlow::Break(()));
        }
        if plant.now_s() - clock.start_s > clock.limit_s {
            return Err(CampaignError::StabilizationTimeout {
                stage,
                limit_s: clock.limit_s,
            });
        }
    }
    Ok(ControlFlow::Continue(()))
}

/// Brings the oven, then the cell, to temperature.
///
/// The oven phase polls every `oven_poll_s` until the oven reading is within
/// `tol_c` of its setpoint. The cell phase applies [`pi_regulate_step`] every
/// `adjust_period_s` until the cell is within `tol_c` of its setpoint and moved
/// less than `drift_c` since the previous correction.
pub fn stabilize_temperatures(
    params: &TemperatureLoopParams,
    plant: &mut Plant,
    observer: &mut StabilizeObserver<'_>,
) -> Result<Stabilization, CampaignError> {
    let clock = Clock {
        start_s: plant.now_s(),
        limit_s: params.stabilization_timeout_s,
    };
    let mut sp_oven = (params.sp_cell_c + params.sp_offset_c).clamp(SP_OVEN_MIN_C, SP_OVEN_MAX_C);
    plant.set_oven_setpoint(sp_oven);
    if observer(
        plant,
        Some(StabilizeEvent::SetpointSent {
            t_s: plant.now_s(),
            sp_oven_c: sp_oven,
        }),
    )
    .is_break()
    {
        return Ok(Stabilization::Aborted);
    }

    loop {
        if wait(plant, params.oven_poll_s, &clock, "oven", observer)?.is_break() {
            return Ok(Stabilization::Aborted);
        }
        let oven = plant.oven_c();
        let within = (oven - sp_oven).abs() <= params.tol_c;
        let event = StabilizeEvent::OvenCheck {
            t_s: plant.now_s(),
            oven_c: oven,
            sp_oven_c: sp_oven,
            within,
        };
        if observer(plant, Some(event)).is_break() {
            return Ok(Stabilization::Aborted);
        }
        if within {
            break;
        }
    }

    let mut pi_steps = 0;
    loop {
        let cell = plant.cell_c();
        sp_oven = pi_regulate_step(sp_oven, params.sp_cell_c, cell, params.ki);
        plant.set_oven_setpoint(sp_oven);
        pi_steps += 1;
        let sent = StabilizeEvent::SetpointSent {
            t_s: plant.now_s(),
            sp_oven_c: sp_oven,
        };
        if observer(plant, Some(sent)).is_break() {
            return Ok(Stabilization::Aborted);
        }
        if wait(plant, params.adjust_period_s, &clock, "cell", observer)?.is_break() {
            return Ok(Stabilization::Aborted);
        }
        let after = plant.cell_c();
        let drift = (after - cell).abs();
        let within = (after - params.sp_cell_c).abs() <= params.tol_c && drift < params.drift_c;
        let event = StabilizeEvent::CellCheck {
            t_s: plant.now_s(),
            cell_c: after,
            drift_c: drift,
            within,
        };
        if observer(plant, Some(event)).is_break() {
            return Ok(Stabilization::Aborted);
        }
        if within {
            return Ok(Stabilization::Stable {
                sp_oven_c: sp_oven,
                cell_c: after,
                drift_c: drift,
                pi_steps,
                elapsed_s: plant.now_s() - clock.start_s,
            });
        }
    }
}
