use std::fs;
use std::path::Path;

use hebb_core::acquisition::{
    Branch, CampaignEvent, CampaignSink, CampaignState, IVCurve, IVPoint, ScanMode, ScanPlan,
};
use hebb_core::analysis::AnalysisSettings;
use hebb_core::batch::{run_campaigns, run_campaigns_seq};
use hebb_core::error::{AnalysisError, CampaignError};
use hebb_core::files::{
    analyze_iv_file, read_conductivity, read_iv, read_trace, trace_file_name, FileSink, CONDUCTIVITY_FILE, IV_FILE,
    SLOPES_FILE,
};
use hebb_core::physics::{CellGeometry, PhysicalConstants, ReferenceAtmosphere};
use hebb_core::sim::{steady_current, CurrentSample};
use hebb_core::workbench::{analysis_context, prepare_output, replay, simulate};
use hebb_core::CampaignConfig;

fn small(mode: ScanMode) -> CampaignConfig {
    let mut c = CampaignConfig::stock("ysz-700C").unwrap();
    c.scan = ScanPlan {
        v_start: 0.0,
        v_min: -0.1,
        v_max: 0.1,
        v_end: 0.0,
        v_step: 0.05,
        mode,
    };
    c
}

struct Snooping {
    files: FileSink,
    snapshots: Vec<(usize, String)>,
}

impl CampaignSink for Snooping {
    fn event(&mut self, event: &CampaignEvent) -> Result<(), CampaignError> {
        self.files.event(event)?;
        if let CampaignEvent::PointPersisted { point, .. } = event {
            let text = fs::read_to_string(self.files.iv_path()).unwrap();
            self.snapshots.push((point.index, text));
        }
        Ok(())
    }

    fn begin_voltage(&mut self, index: usize, branch: Branch, e_app_v: f64) -> Result<(), CampaignError> {
        self.files.begin_voltage(index, branch, e_app_v)
    }

    fn sample(&mut self, sample: &CurrentSample) -> Result<(), CampaignError> {
        self.files.sample(sample)
    }

    fn point(&mut self, point: &IVPoint) -> Result<(), CampaignError> {
        self.files.point(point)
    }

    fn state(&mut self, state: &CampaignState) {
        self.files.state(state)
    }

    fn analyze(&mut self, curve: &IVCurve) -> Result<(), CampaignError> {
        self.files.analyze(curve)
    }
}

#[test]
fn iv_file_is_a_prefix_when_each_point_is_announced() {
    let config = small(ScanMode::Dud);
    let dir = tempfile::tempdir().unwrap();
    let mut sink = Snooping {
        files: prepare_output(&config, dir.path()).unwrap(),
        snapshots: Vec::new(),
    };
    config.campaign().unwrap().run(&mut sink).unwrap();
    let last = fs::read_to_string(dir.path().join(IV_FILE)).unwrap();
    assert_eq!(sink.snapshots.len(), read_iv(&dir.path().join(IV_FILE)).unwrap().len());
    for (n, (index, text)) in sink.snapshots.iter().enumerate() {
        assert_eq!(*index, n);
        assert_eq!(text.lines().count(), n + 2, "header plus {} rows", n + 1);
        assert!(last.starts_with(text.as_str()));
    }
}

#[test]
fn steady_current_is_the_mean_of_stored_samples() {
    let mut config = small(ScanMode::Dud);
    config.steady_state.nm_s = 10;
    let dir = tempfile::tempdir().unwrap();
    let curve = simulate(&config, dir.path()).unwrap().outcome.curve;
    assert!(curve.points.iter().all(|p| !p.is_gap()));
    for p in &curve.points {
        let trace = read_trace(&dir.path().join(trace_file_name(p.index, p.e_app_v))).unwrap();
        let k = p.t_settled_s as usize;
        let window: Vec<f64> = trace
            .iter()
            .filter(|s| s.t_s > k as f64 && s.t_s <= (k + 10) as f64)
            .map(|s| s.filtered_a)
            .collect();
        assert_eq!(window.len(), 10);
        let mean = window.iter().sum::<f64>() / 10.0;
        let scale = window.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(
            (mean - p.i_ss_a).abs() <= 1e-8 * scale + 1e-18,
            "point {}: {mean:e} vs {:e}",
            p.index,
            p.i_ss_a
        );
    }
}

#[test]
fn noise_free_campaign_tracks_steady_current() {
    let mut config = small(ScanMode::Dud);
    config.cell.gaussian_noise_a = 0.0;
    config.heater.disturbance_amp_a = 0.0;
    let dir = tempfile::tempdir().unwrap();
    let curve = simulate(&config, dir.path()).unwrap().outcome.curve;
    for p in &curve.points {
        let truth = steady_current(
            p.e_app_v,
            &config.cell,
            &config.atmosphere,
            &config.geometry,
            &config.constants(),
        )
        .unwrap();
        assert!(
            (p.i_ss_a - truth).abs() <= config.steady_state.threshold_a,
            "{} V: {:e} vs {truth:e}",
            p.e_app_v,
            p.i_ss_a
        );
    }
}

fn copy_files(from: &Path, to: &Path, names: &[&str]) {
    for n in names {
        fs::copy(from.join(n), to.join(n)).unwrap();
    }
}

#[test]
fn offline_analysis_reproduces_the_run() {
    let config = CampaignConfig::stock("ysz-700C").unwrap();
    let run = tempfile::tempdir().unwrap();
    simulate(&config, run.path()).unwrap();

    let offline = tempfile::tempdir().unwrap();
    copy_files(run.path(), offline.path(), &[IV_FILE]);
    analyze_iv_file(
        &offline.path().join(IV_FILE),
        &analysis_context(&config),
        offline.path(),
    )
    .unwrap();
    for name in [CONDUCTIVITY_FILE, SLOPES_FILE] {
        assert_eq!(
            fs::read(run.path().join(name)).unwrap(),
            fs::read(offline.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn replay_rewrites_identical_results() {
    let config = small(ScanMode::Udu);
    let run = tempfile::tempdir().unwrap();
    simulate(&config, run.path()).unwrap();
    let before: Vec<Vec<u8>> = [CONDUCTIVITY_FILE, SLOPES_FILE]
        .iter()
        .map(|n| fs::read(run.path().join(n)).unwrap())
        .collect();
    fs::remove_file(run.path().join(CONDUCTIVITY_FILE)).unwrap();
    replay(run.path()).unwrap();
    for (name, bytes) in [CONDUCTIVITY_FILE, SLOPES_FILE].iter().zip(before) {
        assert_eq!(fs::read(run.path().join(name)).unwrap(), bytes, "{name}");
    }
}

#[test]
fn udu_runs_ascending_first() {
    let dir = tempfile::tempdir().unwrap();
    let curve = simulate(&small(ScanMode::Udu), dir.path()).unwrap().outcome.curve;
    assert_eq!(
        curve.branches(),
        vec![Branch::Ascending1, Branch::Descending, Branch::Ascending2]
    );
    let volts: Vec<f64> = curve.points.iter().map(|p| p.e_app_v).collect();
    let expected = [0.0, 0.05, 0.1, 0.05, 0.0, -0.05, -0.1, -0.05, 0.0];
    assert_eq!(volts.len(), expected.len());
    for (v, e) in volts.iter().zip(expected) {
        assert!((v - e).abs() < 1e-12, "{volts:?}");
    }
}

#[test]
fn batch_parallel_matches_sequential() {
    let configs: Vec<CampaignConfig> = (0..4)
        .map(|seed| CampaignConfig {
            seed,
            ..small(ScanMode::Dud)
        })
        .collect();
    let par = run_campaigns(&configs);
    let seq = run_campaigns_seq(&configs);
    assert_eq!(par.len(), 4);
    for (a, b) in par.iter().zip(&seq) {
        assert_eq!(a.as_ref().unwrap(), b.as_ref().unwrap());
    }
    assert_ne!(par[0].as_ref().unwrap(), par[1].as_ref().unwrap());
}

fn hand_written_iv(dir: &Path, rows: &[(f64, f64)]) -> std::path::PathBuf {
    let mut text = String::from("index,e_app_v,i_ss_a,branch,t_settled_s,flags\n");
    for (i, (e, i_a)) in rows.iter().enumerate() {
        text.push_str(&format!("{i},{e:.8e},{i_a:.8e},descending-1,10,\n"));
    }
    let path = dir.join(IV_FILE);
    fs::write(&path, text).unwrap();
    path
}

fn context() -> hebb_core::files::AnalysisContext {
    hebb_core::files::AnalysisContext {
        geometry: CellGeometry::micro_contact(),
        atmosphere: ReferenceAtmosphere::air_at_700c(),
        consts: PhysicalConstants::CODATA,
        settings: AnalysisSettings::default(),
    }
}

#[test]
fn linear_iv_gives_constant_conductivity() {
    let dir = tempfile::tempdir().unwrap();
    let g = 2.5e-7;
    let rows: Vec<(f64, f64)> = (0..=20).map(|k| -0.01 * f64::from(k)).map(|e| (e, g * e)).collect();
    let iv = hand_written_iv(dir.path(), &rows);
    analyze_iv_file(&iv, &context(), dir.path()).unwrap();
    let sigma = g / (2.0 * std::f64::consts::PI * CellGeometry::micro_contact().contact_radius_m);
    let points = read_conductivity(&dir.path().join(CONDUCTIVITY_FILE)).unwrap();
    assert_eq!(points.len(), 20);
    for p in points {
        assert!(
            (p.sigma_s_per_m - sigma).abs() <= 1e-6 * sigma,
            "{} vs {sigma}",
            p.sigma_s_per_m
        );
    }
}

#[test]
fn single_row_is_insufficient() {
    let dir = tempfile::tempdir().unwrap();
    let iv = hand_written_iv(dir.path(), &[(-0.1, -1e-9)]);
    let err = analyze_iv_file(&iv, &context(), dir.path()).unwrap_err();
    assert!(
        matches!(err, CampaignError::Analysis(AnalysisError::InsufficientPoints { .. })),
        "{err}"
    );
    assert!(!dir.path().join(CONDUCTIVITY_FILE).exists());
}
