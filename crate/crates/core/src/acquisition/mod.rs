//! Measurement procedure: scan planning, steady-state detection, temperature
//! control and the campaign loop that ties them together.

pub mod campaign;
pub mod filter;
pub mod params;
pub mod steady;
pub mod sweep;
pub mod temperature;

pub use campaign::{
    run_campaign, Campaign, CampaignControl, CampaignEvent, CampaignOutcome, CampaignSink, CampaignState, Command,
    IVCurve, IVPoint, MemorySink, Phase, PointStatus,
};
pub use filter::{check_filter_condition, FilterCondition};
pub use params::{update_live_params, ParamsPatch, ScanMode, ScanPlan, SteadyStateParams, TemperatureLoopParams};
pub use steady::{first_detection, measure_steady_current, steady_state_check, CheckOutcome};
pub use sweep::{generate_sweep, plan_voltages, Branch, Direction};
pub use temperature::{pi_regulate_step, stabilize_temperatures, Stabilization, StabilizeEvent};
