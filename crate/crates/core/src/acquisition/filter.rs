use crate::sim::ElectrometerModel;

/// Whether a heater burst of `t_on_s` is shorter than half the median window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterCondition {
    pub satisfied: bool,
    /// (2R+1)·Ts/2 − T_on; negative when violated.
    pub margin_s: f64,
}

pub fn check_filter_condition(t_on_s: f64, electrometer: &ElectrometerModel) -> FilterCondition {
    let half_window = electrometer.window_s() / 2.0;
    FilterCondition {
        satisfied: t_on_s < half_window,
        margin_s: half_window - t_on_s,
    }
}
