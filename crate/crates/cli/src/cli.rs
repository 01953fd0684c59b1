use std::fmt;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hebb_core::acquisition::{IVCurve, ScanMode};
use hebb_core::analysis::{AnalysisReport, FitWindow};
use hebb_core::error::{CampaignError, ConfigError};
use hebb_core::files::{analyze_iv_file, read_iv, IV_FILE};
use hebb_core::workbench::{analysis_context, replay, simulate};
use hebb_core::CampaignConfig;

use crate::server::{self, ServiceOptions, DEFAULT_TIME_RATIO};

const DEFAULT_CONFIG: &str = "ysz-700C";

#[derive(Debug, Parser)]
#[command(name = "hebbwagner", version, about = "Virtual Hebb-Wagner polarization workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a whole campaign on the virtual clock and write its output directory.
    Simulate(SimulateArgs),
    /// Recompute conductivity and slopes from an iv.csv file.
    Analyze(AnalyzeArgs),
    /// Recompute the analysis of a stored output directory.
    Replay(ReplayArgs),
    /// Serve the HTTP API, event stream and steering UI.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    Dud,
    Udu,
}

impl From<Mode> for ScanMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Dud => ScanMode::Dud,
            Mode::Udu => ScanMode::Udu,
        }
    }
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Stock config name or path to a JSON config file.
    #[arg(long, default_value = DEFAULT_CONFIG)]
    pub config: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
}

impl ConfigArgs {
    fn load(&self) -> Result<CampaignConfig, Failure> {
        let mut config = CampaignConfig::resolve(&self.config)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(mode) = self.mode {
            config.scan.mode = mode.into();
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub iv: PathBuf,
    /// Source of geometry, atmosphere and fit settings not given below.
    #[arg(long, default_value = DEFAULT_CONFIG)]
    pub config: String,
    /// Where to write conductivity.csv and slopes.csv; defaults to the iv file's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub contact_radius_m: Option<f64>,
    #[arg(long)]
    pub temperature_k: Option<f64>,
    /// Oxygen activity at the reversible electrode.
    #[arg(long)]
    pub a2: Option<f64>,
    /// Fit window as `lo:hi` in activity; repeat for several.
    #[arg(long = "window", value_parser = parse_window)]
    pub windows: Vec<FitWindow>,
    #[arg(long)]
    pub fit_decades: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Output directory of an earlier campaign.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Campaigns are written to numbered directories below this one.
    #[arg(long, default_value = "campaigns")]
    pub out: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    /// Real seconds per virtual second.
    #[arg(long, default_value_t = DEFAULT_TIME_RATIO)]
    pub time_ratio: f64,
    /// Directory of static UI assets served at `/`.
    #[arg(long, default_value = "ui")]
    pub ui: PathBuf,
}

fn parse_window(text: &str) -> Result<FitWindow, String> {
    let (lo, hi) = text.split_once(':').ok_or("expected lo:hi")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("lower bound: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("upper bound: {e}"))?;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err("need 0 < lo < hi".into());
    }
    Ok(FitWindow {
        label: text.to_string(),
        a_lo: lo,
        a_hi: hi,
    })
}

/// Failure classified by exit status: 1 for configuration, 2 for runtime.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(e) | Failure::Runtime(e) => {
                // Core errors already embed their cause; only add what is new.
                let mut text = e.to_string();
                for cause in e.chain().skip(1) {
                    let cause = cause.to_string();
                    if !text.contains(&cause) {
                        text = format!("{text}: {cause}");
                    }
                }
                f.write_str(&text)
            }
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.into())
    }
}

impl From<CampaignError> for Failure {
    fn from(e: CampaignError) -> Self {
        match e {
            CampaignError::Config(c) => c.into(),
            other => Failure::Runtime(other.into()),
        }
    }
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(args) => run_simulate(args),
        Command::Analyze(args) => run_analyze(args),
        Command::Replay(args) => {
            let report = replay(&args.out)?;
            let curve = read_iv(&args.out.join(IV_FILE)).map_err(CampaignError::from)?;
            print_report(&args.out, &curve, &report, None);
            Ok(())
        }
        Command::Serve(args) => run_serve(args),
    }
}

fn run_simulate(args: SimulateArgs) -> Result<(), Failure> {
    let config = args.config.load()?;
    let out = args
        .out
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| Failure::Config(anyhow!("no output directory: pass --out or set output_dir")))?;
    let result = simulate(&config, &out)?;
    let gaps = result.outcome.curve.points.iter().filter(|p| p.is_gap()).count();
    if gaps > 0 {
        println!("{gaps} points timed out and were left out of the analysis");
    }
    match &result.report {
        Some(report) => print_report(&out, &result.outcome.curve, report, Some(&config)),
        None => println!("campaign aborted; partial results in {}", out.display()),
    }
    Ok(())
}

fn run_analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    let mut config = CampaignConfig::resolve(&args.config)?;
    if let Some(r) = args.contact_radius_m {
        config.geometry.contact_radius_m = r;
    }
    if let Some(t) = args.temperature_k {
        config.atmosphere.temperature_k = t;
    }
    if let Some(a2) = args.a2 {
        config.atmosphere.a_o2_reversible = a2;
    }
    if !args.windows.is_empty() {
        config.analysis.windows = args.windows;
    }
    if let Some(d) = args.fit_decades {
        config.analysis.fit_decades = d;
    }
    config.validate()?;
    let out = match args.out {
        Some(o) => o,
        None => args.iv.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    std::fs::create_dir_all(&out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(Failure::Runtime)?;
    let report = analyze_iv_file(&args.iv, &analysis_context(&config), &out)?;
    let curve = read_iv(&args.iv).map_err(CampaignError::from)?;
    print_report(&out, &curve, &report, Some(&config));
    Ok(())
}

fn run_serve(args: ServeArgs) -> Result<(), Failure> {
    let config = args.config.load()?;
    if !(args.time_ratio >= 0.0 && args.time_ratio.is_finite()) {
        return Err(Failure::Config(anyhow!("--time-ratio must be a non-negative number")));
    }
    let opts = ServiceOptions {
        config,
        out_root: args.out,
        time_ratio: args.time_ratio,
        ui_dir: args.ui,
    };
    let runtime = tokio::runtime::Runtime::new()
        .context("starting the async runtime")
        .map_err(Failure::Runtime)?;
    runtime
        .block_on(server::serve(opts, args.listen))
        .with_context(|| format!("serving on {}", args.listen))
        .map_err(Failure::Runtime)
}

fn print_report(out: &Path, curve: &IVCurve, report: &AnalysisReport, config: Option<&CampaignConfig>) {
    println!(
        "{} points, {} conductivity values in {}",
        curve.len(),
        report.conductivity.len(),
        out.display()
    );
    let branch = config
        .and_then(|c| c.analysis.report_branch_for(curve))
        .or_else(|| curve.branches().last().copied());
    for row in report.slopes.iter().filter(|r| Some(r.branch) == branch) {
        println!(
            "{:<13} {:<6} slope {:+.4}  a {:.2e}..{:.2e}  n {}",
            row.branch.label(),
            row.window,
            row.fit.slope,
            row.fit.a_lo,
            row.fit.a_hi,
            row.fit.n_points
        );
    }
}
