//! Headless entry points: run a campaign into a directory, or redo the
//! analysis of a stored one.

use std::fs;
use std::path::Path;

use crate::acquisition::{CampaignOutcome, CampaignSink, Command};
use crate::analysis::AnalysisReport;
use crate::config::CampaignConfig;
use crate::error::{CampaignError, FileError};
use crate::files::{analyze_iv_file, AnalysisContext, FileSink, CONFIG_FILE, IV_FILE};

pub fn analysis_context(config: &CampaignConfig) -> AnalysisContext {
    AnalysisContext {
        geometry: config.geometry,
        atmosphere: config.atmosphere,
        consts: config.constants(),
        settings: config.analysis.clone(),
    }
}

/// Creates `out_dir`, stores the config there and opens the output files.
pub fn prepare_output(config: &CampaignConfig, out_dir: &Path) -> Result<FileSink, FileError> {
    let sink = FileSink::create(out_dir, analysis_context(config))?;
    let path = out_dir.join(CONFIG_FILE);
    fs::write(&path, config.to_stored_json()).map_err(|e| FileError::io(&path, e))?;
    Ok(sink)
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub outcome: CampaignOutcome,
    /// `None` when the campaign was aborted before analysis.
    pub report: Option<AnalysisReport>,
}

/// Runs the whole campaign on the virtual clock and writes `out_dir`.
pub fn simulate(config: &CampaignConfig, out_dir: &Path) -> Result<SimulationOutput, CampaignError> {
    let mut sink = prepare_output(config, out_dir)?;
    let outcome = config.campaign()?.run(&mut sink)?;
    Ok(SimulationOutput {
        outcome,
        report: sink.take_report(),
    })
}

/// Like [`simulate`], with a command queue and a sink wrapped around the files.
pub fn simulate_with<S, F>(
    config: &CampaignConfig,
    out_dir: &Path,
    commands: std::sync::mpsc::Receiver<Command>,
    wrap: F,
) -> Result<CampaignOutcome, CampaignError>
where
    S: CampaignSink,
    F: FnOnce(FileSink) -> S,
{
    let files = prepare_output(config, out_dir)?;
    let mut sink = wrap(files);
    config.campaign()?.with_commands(commands).run(&mut sink)
}

/// Recomputes the conductivity and slope files of a stored output directory.
pub fn replay(dir: &Path) -> Result<AnalysisReport, CampaignError> {
    let config = CampaignConfig::load(&dir.join(CONFIG_FILE))?;
    analyze_iv_file(&dir.join(IV_FILE), &analysis_context(&config), dir)
}
