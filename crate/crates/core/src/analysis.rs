//! From an I-V curve to electronic conductivity against oxygen activity.
//!
//! Each branch is differentiated on its own with forward differences placed at
//! the midpoint voltage. Non-positive derivatives are repaired only when
//! isolated; the rest are dropped. Midpoints map to activities through the
//! Nernst relation, and power-law slopes come from OLS in log-log space.

use serde::{Deserialize, Serialize};

use crate::acquisition::{Branch, IVCurve};
use crate::error::{AnalysisError, FieldError};
use crate::par;
use crate::physics::{
    conductivity_from_derivative, nernst_activity, CellGeometry, PhysicalConstants, ReferenceAtmosphere,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivative {
    pub e_mid_v: f64,
    pub di_de: f64,
}

/// Forward differences of one branch, sorted by voltage.
///
/// Timed-out points are gaps and take no part.
pub fn differentiate_iv(curve: &IVCurve, branch: Branch) -> Result<Vec<Derivative>, AnalysisError> {
    let mut pts: Vec<(f64, f64)> = curve
        .branch(branch)
        .filter(|p| !p.is_gap())
        .map(|p| (p.e_app_v, p.i_ss_a))
        .collect();
    if pts.len() < 2 {
        return Err(AnalysisError::InsufficientPoints {
            branch: branch.to_string(),
            found: pts.len(),
            needed: 2,
        });
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.windows(2)
        .map(|w| {
            let (e0, i0) = w[0];
            let (e1, i1) = w[1];
            if e1 - e0 <= 0.0 {
                return Err(AnalysisError::DegenerateStep {
                    branch: branch.to_string(),
                    voltage: e0,
                });
            }
            Ok(Derivative {
                e_mid_v: 0.5 * (e0 + e1),
                di_de: (i1 - i0) / (e1 - e0),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairFlag {
    Original,
    /// Isolated non-positive value replaced by the mean of its neighbours.
    Repaired,
    /// Non-positive value at an endpoint or inside a run; excluded downstream.
    Unrepairable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepairedValue {
    pub value: f64,
    pub flag: RepairFlag,
}

pub fn repair_negative_points(series: &[f64]) -> Vec<RepairedValue> {
    let positive = |j: usize| series[j] > 0.0;
    (0..series.len())
        .map(|i| {
            if positive(i) {
                RepairedValue {
                    value: series[i],
                    flag: RepairFlag::Original,
                }
            } else if i > 0 && i + 1 < series.len() && positive(i - 1) && positive(i + 1) {
                RepairedValue {
                    value: 0.5 * (series[i - 1] + series[i + 1]),
                    flag: RepairFlag::Repaired,
                }
            } else {
                RepairedValue {
                    value: series[i],
                    flag: RepairFlag::Unrepairable,
                }
            }
        })
        .collect()
}

/// Values that survive repair, in order.
pub fn retained(repaired: &[RepairedValue]) -> Vec<f64> {
    repaired
        .iter()
        .filter(|r| r.flag != RepairFlag::Unrepairable)
        .map(|r| r.value)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConductivityPoint {
    pub branch: Branch,
    pub e_mid_v: f64,
    pub log10_a_o2: f64,
    pub sigma_s_per_m: f64,
    pub repaired: bool,
}

impl ConductivityPoint {
    pub fn a_o2(&self) -> f64 {
        10f64.powf(self.log10_a_o2)
    }
}

pub fn conductivity_curve(
    curve: &IVCurve,
    geom: &CellGeometry,
    atmosphere: &ReferenceAtmosphere,
    consts: &PhysicalConstants,
    branch: Branch,
) -> Result<Vec<ConductivityPoint>, AnalysisError> {
    let derivs = differentiate_iv(curve, branch)?;
    let slopes: Vec<f64> = derivs.iter().map(|d| d.di_de).collect();
    let repaired = repair_negative_points(&slopes);
    let mut out = Vec::with_capacity(derivs.len());
    for (d, r) in derivs.iter().zip(&repaired) {
        if r.flag == RepairFlag::Unrepairable {
            continue;
        }
        let a = nernst_activity(d.e_mid_v, atmosphere, consts)?;
        out.push(ConductivityPoint {
            branch,
            e_mid_v: d.e_mid_v,
            log10_a_o2: a.log10(),
            sigma_s_per_m: conductivity_from_derivative(r.value, geom)?,
            repaired: r.flag == RepairFlag::Repaired,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub a_lo: f64,
    pub a_hi: f64,
    pub n_points: usize,
    pub rms_residual: f64,
}

/// OLS of log10 σ on log10 a over the points with `a_lo ≤ a ≤ a_hi`.
pub fn fit_slope(points: &[ConductivityPoint], a_lo: f64, a_hi: f64) -> Result<SlopeFit, AnalysisError> {
    if !(a_lo > 0.0 && a_lo < a_hi) {
        return Err(AnalysisError::BadRange { lo: a_lo, hi: a_hi });
    }
    let (lo, hi) = (a_lo.log10(), a_hi.log10());
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.log10_a_o2 >= lo && p.log10_a_o2 <= hi && p.sigma_s_per_m > 0.0)
        .map(|p| (p.log10_a_o2, p.sigma_s_per_m.log10()))
        .collect();
    let n = xy.len();
    if n < 2 {
        return Err(AnalysisError::InsufficientData {
            lo: a_lo,
            hi: a_hi,
            found: n,
        });
    }
    let nf = n as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(AnalysisError::InsufficientData {
            lo: a_lo,
            hi: a_hi,
            found: 1,
        });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xy.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(SlopeFit {
        slope,
        intercept,
        a_lo,
        a_hi,
        n_points: n,
        rms_residual: (sse / nf).sqrt(),
    })
}

/// An activity interval for slope fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitWindow {
    pub label: String,
    pub a_lo: f64,
    pub a_hi: f64,
}

/// The lowest and highest `decades`-wide windows of the activities present.
pub fn default_windows(points: &[ConductivityPoint], decades: f64) -> Vec<FitWindow> {
    let lo = points.iter().map(|p| p.log10_a_o2).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.log10_a_o2).fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
        return Vec::new();
    }
    // Small outward pad so the extreme points sit inside despite powf/log10 round trips.
    let pad = 1e-9;
    let width = decades.min(hi - lo);
    vec![
        FitWindow {
            label: "low".into(),
            a_lo: 10f64.powf(lo - pad),
            a_hi: 10f64.powf(lo + width),
        },
        FitWindow {
            label: "high".into(),
            a_lo: 10f64.powf(hi - width),
            a_hi: 10f64.powf(hi + pad),
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSettings {
    /// Width of the automatic low/high fit windows, in decades of activity.
    #[serde(default = "default_decades")]
    pub fit_decades: f64,
    /// Explicit windows; when non-empty they replace the automatic ones.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub windows: Vec<FitWindow>,
    /// Branch summarized on the console; defaults to the last leg of the scan.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_branch: Option<Branch>,
}

fn default_decades() -> f64 {
    4.0
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            fit_decades: default_decades(),
            windows: Vec::new(),
            report_branch: None,
        }
    }
}

impl AnalysisSettings {
    pub fn validate(&self, prefix: &str) -> Vec<FieldError> {
        let mut errors = Vec::new();
        if !(self.fit_decades > 0.0 && self.fit_decades.is_finite()) {
            errors.push(FieldError::new(format!("{prefix}.fit_decades"), "must be positive"));
        }
        for (i, w) in self.windows.iter().enumerate() {
            if !(w.a_lo > 0.0 && w.a_lo < w.a_hi && w.a_hi.is_finite()) {
                errors.push(FieldError::new(
                    format!("{prefix}.windows[{i}]"),
                    "need 0 < a_lo < a_hi",
                ));
            }
            if w.label.is_empty() || w.label.contains([',', '\n', '"']) {
                errors.push(FieldError::new(
                    format!("{prefix}.windows[{i}].label"),
                    "must be non-empty without commas, quotes or newlines",
                ));
            }
        }
        errors
    }

    /// The configured report branch, or the last scan leg present in `curve`.
    pub fn report_branch_for(&self, curve: &IVCurve) -> Option<Branch> {
        self.report_branch.or_else(|| curve.branches().last().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeRow {
    pub branch: Branch,
    pub window: String,
    #[serde(flatten)]
    pub fit: SlopeFit,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub conductivity: Vec<ConductivityPoint>,
    pub slopes: Vec<SlopeRow>,
}

/// Runs the whole analysis on every branch of `curve`.
///
/// Branches with fewer than two usable points are skipped; if none is usable
/// the first branch's error is returned. Windows with fewer than two points on
/// a branch produce no slope row.
pub fn analyze_curve(
    curve: &IVCurve,
    geom: &CellGeometry,
    atmosphere: &ReferenceAtmosphere,
    consts: &PhysicalConstants,
    settings: &AnalysisSettings,
) -> Result<AnalysisReport, AnalysisError> {
    let branches = curve.branches();
    if branches.is_empty() {
        return Err(AnalysisError::InsufficientPoints {
            branch: "any".into(),
            found: 0,
            needed: 2,
        });
    }
    let per_branch = par::map(&branches, |b| conductivity_curve(curve, geom, atmosphere, consts, *b));
    let mut first_err = None;
    let mut usable: Vec<Vec<ConductivityPoint>> = Vec::new();
    for r in per_branch {
        match r {
            Ok(points) => usable.push(points),
            Err(e @ AnalysisError::InsufficientPoints { .. }) => {
                first_err.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    if usable.is_empty() {
        return Err(first_err.expect("at least one branch"));
    }
    let all: Vec<ConductivityPoint> = usable.iter().flatten().copied().collect();
    let windows = if settings.windows.is_empty() {
        default_windows(&all, settings.fit_decades)
    } else {
        settings.windows.clone()
    };
    let mut slopes = Vec::new();
    for points in &usable {
        let Some(branch) = points.first().map(|p| p.branch) else {
            continue;
        };
        for w in &windows {
            match fit_slope(points, w.a_lo, w.a_hi) {
                Ok(fit) => slopes.push(SlopeRow {
                    branch,
                    window: w.label.clone(),
                    fit,
                }),
                Err(AnalysisError::InsufficientData { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(AnalysisReport {
        conductivity: all,
        slopes,
    })
}
