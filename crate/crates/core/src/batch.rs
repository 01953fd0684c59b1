//! Independent campaigns run side by side, e.g. a seed or parameter sweep.

use crate::acquisition::{IVCurve, MemorySink};
use crate::config::CampaignConfig;
use crate::error::CampaignError;
use crate::par;

/// Runs each config in memory; results keep the input order.
pub fn run_campaigns(configs: &[CampaignConfig]) -> Vec<Result<IVCurve, CampaignError>> {
    par::map(configs, run_one)
}

/// Sequential reference for [`run_campaigns`].
pub fn run_campaigns_seq(configs: &[CampaignConfig]) -> Vec<Result<IVCurve, CampaignError>> {
    par::seq_map(configs, run_one)
}

fn run_one(config: &CampaignConfig) -> Result<IVCurve, CampaignError> {
    let mut sink = MemorySink::default();
    Ok(config.campaign()?.run(&mut sink)?.curve)
}
