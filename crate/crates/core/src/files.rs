//! On-disk formats and the sink that writes a campaign's output directory.
//!
//! Every float is written with 9 significant digits, so writing what was read
//! reproduces the file byte for byte.

use std::fs::{self, File, OpenOptions};
use std::io::{LineWriter, Write};
use std::path::{Path, PathBuf};

use crate::acquisition::{Branch, CampaignEvent, CampaignSink, IVCurve, IVPoint, PointStatus};
use crate::analysis::{analyze_curve, AnalysisReport, AnalysisSettings, ConductivityPoint, SlopeFit, SlopeRow};
use crate::error::{CampaignError, FileError};
use crate::format::sci;
use crate::physics::{CellGeometry, PhysicalConstants, ReferenceAtmosphere};
use crate::sim::CurrentSample;

pub const IV_FILE: &str = "iv.csv";
pub const CONDUCTIVITY_FILE: &str = "conductivity.csv";
pub const SLOPES_FILE: &str = "slopes.csv";
pub const EVENTS_FILE: &str = "events.log";
pub const CONFIG_FILE: &str = "config.json";

pub const IV_HEADER: [&str; 6] = ["index", "e_app_v", "i_ss_a", "branch", "t_settled_s", "flags"];
pub const TRACE_HEADER: [&str; 5] = ["t_s", "raw_a", "filtered_a", "cell_temp_c", "heater_on"];
pub const CONDUCTIVITY_HEADER: [&str; 5] = ["branch", "e_mid_v", "log10_a_o2", "sigma_s_per_m", "repaired"];
pub const SLOPES_HEADER: [&str; 8] = [
    "branch",
    "window",
    "a_lo",
    "a_hi",
    "slope",
    "intercept",
    "n_points",
    "rms_residual",
];

/// `trace_003_m150mV.csv` for index 3 at −0.15 V.
pub fn trace_file_name(index: usize, e_app_v: f64) -> String {
    let mv = (e_app_v * 1000.0).round() as i64;
    let sign = if mv < 0 { 'm' } else { 'p' };
    format!("trace_{index:03}_{sign}{}mV.csv", mv.unsigned_abs())
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn iv_record(p: &IVPoint) -> [String; 6] {
    [
        p.index.to_string(),
        sci(p.e_app_v),
        sci(p.i_ss_a),
        p.branch.label().to_string(),
        sci(p.t_settled_s),
        p.status.flags().to_string(),
    ]
}

fn trace_record(s: &CurrentSample) -> [String; 5] {
    [
        sci(s.t_s),
        sci(s.raw_a),
        sci(s.filtered_a),
        sci(s.cell_temp_c),
        flag(s.heater_on).to_string(),
    ]
}

fn conductivity_record(p: &ConductivityPoint) -> [String; 5] {
    [
        p.branch.label().to_string(),
        sci(p.e_mid_v),
        sci(p.log10_a_o2),
        sci(p.sigma_s_per_m),
        flag(p.repaired).to_string(),
    ]
}

fn slope_record(r: &SlopeRow) -> [String; 8] {
    [
        r.branch.label().to_string(),
        r.window.clone(),
        sci(r.fit.a_lo),
        sci(r.fit.a_hi),
        sci(r.fit.slope),
        sci(r.fit.intercept),
        r.fit.n_points.to_string(),
        sci(r.fit.rms_residual),
    ]
}

/// CSV file that is flushed after every row, so readers always see whole rows.
pub struct CsvAppender {
    path: PathBuf,
    inner: csv::Writer<File>,
}

impl CsvAppender {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self, FileError> {
        let file = File::create(path).map_err(|e| FileError::io(path, e))?;
        let mut me = Self {
            path: path.to_path_buf(),
            inner: csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(file),
        };
        me.row(header)?;
        Ok(me)
    }

    pub fn row<I, T>(&mut self, fields: I) -> Result<(), FileError>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.inner.write_record(fields).map_err(|e| self.csv_error(e))?;
        self.inner.flush().map_err(|e| FileError::io(&self.path, e))
    }

    fn csv_error(&self, e: csv::Error) -> FileError {
        FileError::io(&self.path, std::io::Error::other(e))
    }
}

fn write_all<R: AsRef<[u8]>, const N: usize>(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = [R; N]>,
) -> Result<(), FileError> {
    let mut w = CsvAppender::create(path, header)?;
    for r in rows {
        w.row(r)?;
    }
    Ok(())
}

pub fn write_iv(path: &Path, curve: &IVCurve) -> Result<(), FileError> {
    write_all(path, &IV_HEADER, curve.points.iter().map(iv_record))
}

pub fn write_trace(path: &Path, samples: &[CurrentSample]) -> Result<(), FileError> {
    write_all(path, &TRACE_HEADER, samples.iter().map(trace_record))
}

pub fn write_conductivity(path: &Path, points: &[ConductivityPoint]) -> Result<(), FileError> {
    write_all(path, &CONDUCTIVITY_HEADER, points.iter().map(conductivity_record))
}

pub fn write_slopes(path: &Path, rows: &[SlopeRow]) -> Result<(), FileError> {
    write_all(path, &SLOPES_HEADER, rows.iter().map(slope_record))
}

/// Row-by-row reader with line-numbered errors.
struct Rows<'a> {
    path: &'a Path,
    line: u64,
    record: csv::StringRecord,
}

impl Rows<'_> {
    fn err(&self, message: impl Into<String>) -> FileError {
        FileError::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            message: message.into(),
        }
    }

    fn text(&self, col: usize) -> &str {
        self.record.get(col).unwrap_or("")
    }

    fn float(&self, col: usize, name: &str) -> Result<f64, FileError> {
        let t = self.text(col);
        match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err(format!("{name}: expected a finite number, got {t:?}"))),
        }
    }

    fn uint(&self, col: usize, name: &str) -> Result<usize, FileError> {
        let t = self.text(col);
        t.parse::<usize>()
            .map_err(|_| self.err(format!("{name}: expected a non-negative integer, got {t:?}")))
    }

    fn flag(&self, col: usize, name: &str) -> Result<bool, FileError> {
        match self.text(col) {
            "1" => Ok(true),
            "0" => Ok(false),
            t => Err(self.err(format!("{name}: expected 0 or 1, got {t:?}"))),
        }
    }

    fn branch(&self, col: usize) -> Result<Branch, FileError> {
        let t = self.text(col);
        t.parse::<Branch>()
            .map_err(|_| self.err(format!("branch: unknown label {t:?}")))
    }
}

fn parse_csv<T>(
    path: &Path,
    text: &str,
    header: &[&str],
    mut row: impl FnMut(&Rows<'_>) -> Result<T, FileError>,
) -> Result<Vec<T>, FileError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    let mut rows = Rows {
        path,
        line: 1,
        record: csv::StringRecord::new(),
    };
    let mut first = true;
    loop {
        match reader.read_record(&mut rows.record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let line = e.position().map_or(rows.line, |p| p.line());
                return Err(FileError::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: e.to_string(),
                });
            }
        }
        rows.line = rows.record.position().map_or(rows.line + 1, |p| p.line());
        if first {
            first = false;
            let got: Vec<&str> = rows.record.iter().collect();
            if got != header {
                return Err(rows.err(format!(
                    "expected header {:?}, got {:?}",
                    header.join(","),
                    got.join(",")
                )));
            }
            continue;
        }
        if rows.record.len() != header.len() {
            return Err(rows.err(format!("expected {} fields, got {}", header.len(), rows.record.len())));
        }
        out.push(row(&rows)?);
    }
    if first {
        return Err(FileError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "missing header".into(),
        });
    }
    Ok(out)
}

fn read_text(path: &Path) -> Result<String, FileError> {
    fs::read_to_string(path).map_err(|e| FileError::io(path, e))
}

pub fn parse_iv(path: &Path, text: &str) -> Result<IVCurve, FileError> {
    let points = parse_csv(path, text, &IV_HEADER, |r| {
        let status = match r.text(5) {
            "" => PointStatus::Measured,
            "timeout" => PointStatus::Timeout,
            t => return Err(r.err(format!("flags: unknown value {t:?}"))),
        };
        Ok(IVPoint {
            index: r.uint(0, "index")?,
            e_app_v: r.float(1, "e_app_v")?,
            i_ss_a: r.float(2, "i_ss_a")?,
            branch: r.branch(3)?,
            t_settled_s: r.float(4, "t_settled_s")?,
            status,
        })
    })?;
    Ok(IVCurve { points })
}

pub fn read_iv(path: &Path) -> Result<IVCurve, FileError> {
    parse_iv(path, &read_text(path)?)
}

pub fn read_trace(path: &Path) -> Result<Vec<CurrentSample>, FileError> {
    parse_csv(path, &read_text(path)?, &TRACE_HEADER, |r| {
        Ok(CurrentSample {
            t_s: r.float(0, "t_s")?,
            raw_a: r.float(1, "raw_a")?,
            filtered_a: r.float(2, "filtered_a")?,
            cell_temp_c: r.float(3, "cell_temp_c")?,
            heater_on: r.flag(4, "heater_on")?,
        })
    })
}

pub fn read_conductivity(path: &Path) -> Result<Vec<ConductivityPoint>, FileError> {
    parse_csv(path, &read_text(path)?, &CONDUCTIVITY_HEADER, |r| {
        Ok(ConductivityPoint {
            branch: r.branch(0)?,
            e_mid_v: r.float(1, "e_mid_v")?,
            log10_a_o2: r.float(2, "log10_a_o2")?,
            sigma_s_per_m: r.float(3, "sigma_s_per_m")?,
            repaired: r.flag(4, "repaired")?,
        })
    })
}

pub fn read_slopes(path: &Path) -> Result<Vec<SlopeRow>, FileError> {
    parse_csv(path, &read_text(path)?, &SLOPES_HEADER, |r| {
        Ok(SlopeRow {
            branch: r.branch(0)?,
            window: r.text(1).to_string(),
            fit: SlopeFit {
                a_lo: r.float(2, "a_lo")?,
                a_hi: r.float(3, "a_hi")?,
                slope: r.float(4, "slope")?,
                intercept: r.float(5, "intercept")?,
                n_points: r.uint(6, "n_points")?,
                rms_residual: r.float(7, "rms_residual")?,
            },
        })
    })
}

/// Everything the offline analysis needs besides the I-V curve.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisContext {
    pub geometry: CellGeometry,
    pub atmosphere: ReferenceAtmosphere,
    pub consts: PhysicalConstants,
    pub settings: AnalysisSettings,
}

/// Reads `iv_path`, analyzes it and writes the conductivity and slope files
/// into `out_dir`. Simulation, `analyze` and `replay` all end here.
pub fn analyze_iv_file(iv_path: &Path, ctx: &AnalysisContext, out_dir: &Path) -> Result<AnalysisReport, CampaignError> {
    let curve = read_iv(iv_path)?;
    let report = analyze_curve(&curve, &ctx.geometry, &ctx.atmosphere, &ctx.consts, &ctx.settings)?;
    write_conductivity(&out_dir.join(CONDUCTIVITY_FILE), &report.conductivity)?;
    write_slopes(&out_dir.join(SLOPES_FILE), &report.slopes)?;
    Ok(report)
}

/// Campaign sink that persists the output directory as results arrive.
pub struct FileSink {
    dir: PathBuf,
    iv: CsvAppender,
    trace: Option<(PathBuf, CsvAppender)>,
    events: LineWriter<File>,
    ctx: AnalysisContext,
    report: Option<AnalysisReport>,
}

impl FileSink {
    /// Creates `dir` and starts empty `iv.csv` and `events.log` files.
    pub fn create(dir: &Path, ctx: AnalysisContext) -> Result<Self, FileError> {
        fs::create_dir_all(dir).map_err(|e| FileError::io(dir, e))?;
        let iv = CsvAppender::create(&dir.join(IV_FILE), &IV_HEADER)?;
        let events_path = dir.join(EVENTS_FILE);
        let events = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&events_path)
            .map_err(|e| FileError::io(&events_path, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            iv,
            trace: None,
            events: LineWriter::new(events),
            ctx,
            report: None,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn iv_path(&self) -> PathBuf {
        self.dir.join(IV_FILE)
    }

    /// Path of the trace being written, if a voltage is applied.
    pub fn current_trace(&self) -> Option<&Path> {
        self.trace.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn report(&self) -> Option<&AnalysisReport> {
        self.report.as_ref()
    }

    pub fn take_report(&mut self) -> Option<AnalysisReport> {
        self.report.take()
    }
}

impl CampaignSink for FileSink {
    fn event(&mut self, event: &CampaignEvent) -> Result<(), CampaignError> {
        writeln!(self.events, "{event}").map_err(|e| FileError::io(self.dir.join(EVENTS_FILE), e))?;
        Ok(())
    }

    fn begin_voltage(&mut self, index: usize, _branch: Branch, e_app_v: f64) -> Result<(), CampaignError> {
        let path = self.dir.join(trace_file_name(index, e_app_v));
        let w = CsvAppender::create(&path, &TRACE_HEADER)?;
        self.trace = Some((path, w));
        Ok(())
    }

    fn sample(&mut self, sample: &CurrentSample) -> Result<(), CampaignError> {
        if let Some((_, w)) = self.trace.as_mut() {
            w.row(trace_record(sample))?;
        }
        Ok(())
    }

    fn point(&mut self, point: &IVPoint) -> Result<(), CampaignError> {
        self.iv.row(iv_record(point))?;
        Ok(())
    }

    fn analyze(&mut self, _curve: &IVCurve) -> Result<(), CampaignError> {
        let iv = self.iv_path();
        self.report = Some(analyze_iv_file(&iv, &self.ctx, &self.dir)?);
        Ok(())
    }
}
