//! The measurement campaign: stabilize temperatures, then walk the scan,
//! detecting the steady state and averaging the current at each voltage.

use std::collections::VecDeque;
use std::fmt;
use std::ops::ControlFlow;
use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};

use serde::{Deserialize, Serialize};

use super::filter::check_filter_condition;
use super::params::{update_live_params, ParamsPatch, ScanPlan, SteadyStateParams, TemperatureLoopParams};
use super::steady::{measure_steady_current, steady_state_check, CheckOutcome};
use super::sweep::{plan_voltages, Branch};
use super::temperature::{stabilize_temperatures, Stabilization, StabilizeEvent};
use crate::error::{CampaignError, FieldError};
use crate::format::sci;
use crate::sim::{CurrentSample, Plant, NS_PER_S};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    OvenStabilizing,
    CellStabilizing,
    Scanning,
    Analyzing,
    Done,
    Aborted,
}

impl Phase {
    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Done | Phase::Aborted)
    }

    fn label(self) -> &'static str {
        match self {
            Phase::OvenStabilizing => "oven_stabilizing",
            Phase::CellStabilizing => "cell_stabilizing",
            Phase::Scanning => "scanning",
            Phase::Analyzing => "analyzing",
            Phase::Done => "done",
            Phase::Aborted => "aborted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointStatus {
    #[default]
    Measured,
    /// No steady state within the per-voltage timeout; `i_ss_a` is the last window mean.
    Timeout,
}

impl PointStatus {
    pub fn flags(self) -> &'static str {
        match self {
            PointStatus::Measured => "",
            PointStatus::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IVPoint {
    pub index: usize,
    pub e_app_v: f64,
    pub i_ss_a: f64,
    pub branch: Branch,
    pub t_settled_s: f64,
    #[serde(default)]
    pub status: PointStatus,
}

impl IVPoint {
    pub fn is_gap(&self) -> bool {
        self.status != PointStatus::Measured
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IVCurve {
    pub points: Vec<IVPoint>,
}

impl IVCurve {
    pub fn branch(&self, branch: Branch) -> impl Iterator<Item = &IVPoint> + '_ {
        self.points.iter().filter(move |p| p.branch == branch)
    }

    /// Branches present, in scan order.
    pub fn branches(&self) -> Vec<Branch> {
        let mut out: Vec<Branch> = Vec::new();
        for p in &self.points {
            if !out.contains(&p.branch) {
                out.push(p.branch);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Snapshot of a running campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignState {
    pub phase: Phase,
    pub live_params: SteadyStateParams,
    pub current_voltage: f64,
    pub current_index: Option<usize>,
    pub points_done: usize,
    pub total_points: usize,
    pub sp_oven_c: f64,
    pub oven_c: f64,
    pub cell_c: f64,
    pub virtual_time_s: f64,
    pub pending_patches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CampaignEvent {
    Phase {
        t_s: f64,
        phase: Phase,
    },
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
    FilterCondition {
        t_s: f64,
        t_on_s: f64,
        window_s: f64,
        margin_s: f64,
        satisfied: bool,
    },
    VoltageApplied {
        t_s: f64,
        index: usize,
        branch: Branch,
        e_app_v: f64,
    },
    ParamsApplied {
        t_s: f64,
        since_apply_s: u32,
        params: SteadyStateParams,
    },
    ParamsRejected {
        t_s: f64,
        errors: Vec<FieldError>,
    },
    Detection {
        t_s: f64,
        index: usize,
        e_app_v: f64,
        settled_s: u32,
        delta_a: f64,
    },
    Timeout {
        t_s: f64,
        index: usize,
        e_app_v: f64,
    },
    PointPersisted {
        t_s: f64,
        point: IVPoint,
    },
    Aborted {
        t_s: f64,
    },
}

fn ts(t: f64) -> String {
    format!("{t:.1}")
}

impl fmt::Display for CampaignEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use CampaignEvent::*;
        match self {
            Phase { t_s, phase } => write!(f, "t={} phase {}", ts(*t_s), phase.label()),
            SetpointSent { t_s, sp_oven_c } => {
                write!(f, "t={} setpoint sp_oven_c={}", ts(*t_s), sci(*sp_oven_c))
            }
            OvenCheck {
                t_s,
                oven_c,
                sp_oven_c,
                within,
            } => write!(
                f,
                "t={} oven-check oven_c={} sp_oven_c={} within={within}",
                ts(*t_s),
                sci(*oven_c),
                sci(*sp_oven_c)
            ),
            CellCheck {
                t_s,
                cell_c,
                drift_c,
                within,
            } => write!(
                f,
                "t={} cell-check cell_c={} drift_c={} within={within}",
                ts(*t_s),
                sci(*cell_c),
                sci(*drift_c)
            ),
            FilterCondition {
                t_s,
                t_on_s,
                window_s,
                margin_s,
                satisfied,
            } => write!(
                f,
                "t={} {} t_on_s={} window_s={} margin_s={}",
                ts(*t_s),
                if *satisfied {
                    "filter-ok"
                } else {
                    "WARNING filter-condition-violated"
                },
                sci(*t_on_s),
                sci(*window_s),
                sci(*margin_s)
            ),
            VoltageApplied {
                t_s,
                index,
                branch,
                e_app_v,
            } => write!(
                f,
                "t={} apply index={index} branch={branch} e_app_v={}",
                ts(*t_s),
                sci(*e_app_v)
            ),
            ParamsApplied {
                t_s,
                since_apply_s,
                params,
            } => write!(
                f,
                "t={} params-applied boundary_s={since_apply_s} np_s={} nw_s={} s_threshold_a={} nm_s={}",
                ts(*t_s),
                params.np_s,
                params.nw_s,
                sci(params.threshold_a),
                params.nm_s
            ),
            ParamsRejected { t_s, errors } => {
                let list: Vec<String> = errors.iter().map(ToString::to_string).collect();
                write!(f, "t={} params-rejected {}", ts(*t_s), list.join("; "))
            }
            Detection {
                t_s,
                index,
                e_app_v,
                settled_s,
                delta_a,
            } => write!(
                f,
                "t={} steady index={index} e_app_v={} settled_s={settled_s} delta_a={}",
                ts(*t_s),
                sci(*e_app_v),
                sci(*delta_a)
            ),
            Timeout { t_s, index, e_app_v } => {
                write!(f, "t={} timeout index={index} e_app_v={}", ts(*t_s), sci(*e_app_v))
            }
            PointPersisted { t_s, point } => write!(
                f,
                "t={} persisted index={} e_app_v={} i_ss_a={} branch={}{}",
                ts(*t_s),
                point.index,
                sci(point.e_app_v),
                sci(point.i_ss_a),
                point.branch,
                if point.is_gap() { " gap" } else { "" }
            ),
            Aborted { t_s } => write!(f, "t={} aborted", ts(*t_s)),
        }
    }
}

/// Receives everything a campaign produces, in order.
///
/// A point is handed to [`CampaignSink::point`] before the matching
/// `PointPersisted` event, so sinks that notify observers can persist first.
pub trait CampaignSink {
    fn event(&mut self, event: &CampaignEvent) -> Result<(), CampaignError>;

    fn begin_voltage(&mut self, _index: usize, _branch: Branch, _e_app_v: f64) -> Result<(), CampaignError> {
        Ok(())
    }

    fn sample(&mut self, _sample: &CurrentSample) -> Result<(), CampaignError> {
        Ok(())
    }

    fn point(&mut self, _point: &IVPoint) -> Result<(), CampaignError> {
        Ok(())
    }

    fn state(&mut self, _state: &CampaignState) {}

    /// Called once per elapsed virtual second; real-time pacing hooks here.
    fn tick(&mut self) {}

    fn analyze(&mut self, _curve: &IVCurve) -> Result<(), CampaignError> {
        Ok(())
    }
}

/// Sink that keeps everything in memory.
#[derive(Debug, Default, Clone)]
pub struct MemorySink {
    pub events: Vec<CampaignEvent>,
    /// 1 Hz samples per voltage index.
    pub traces: Vec<Vec<CurrentSample>>,
    pub points: Vec<IVPoint>,
    pub last_state: Option<CampaignState>,
}

impl CampaignSink for MemorySink {
    fn event(&mut self, event: &CampaignEvent) -> Result<(), CampaignError> {
        self.events.push(event.clone());
        Ok(())
    }

    fn begin_voltage(&mut self, _index: usize, _branch: Branch, _e_app_v: f64) -> Result<(), CampaignError> {
        self.traces.push(Vec::new());
        Ok(())
    }

    fn sample(&mut self, sample: &CurrentSample) -> Result<(), CampaignError> {
        if let Some(t) = self.traces.last_mut() {
            t.push(*sample);
        }
        Ok(())
    }

    fn point(&mut self, point: &IVPoint) -> Result<(), CampaignError> {
        self.points.push(*point);
        Ok(())
    }

    fn state(&mut self, state: &CampaignState) {
        self.last_state = Some(state.clone());
    }
}

#[derive(Debug, Clone)]
pub enum Command {
    Patch(ParamsPatch),
    Abort,
}

/// Sending side of the campaign command queue; cheap to clone.
#[derive(Debug, Clone)]
pub struct CampaignControl {
    tx: Sender<Command>,
}

impl CampaignControl {
    pub fn channel() -> (CampaignControl, Receiver<Command>) {
        let (tx, rx) = mpsc::channel();
        (CampaignControl { tx }, rx)
    }

    /// Validates `patch` against `current` and queues it for the next Np boundary.
    ///
    /// Returns the parameters the patch will produce; an empty patch is
    /// acknowledged without being queued.
    pub fn update_live_params(
        &self,
        current: &SteadyStateParams,
        patch: ParamsPatch,
    ) -> Result<SteadyStateParams, Vec<FieldError>> {
        let next = update_live_params(current, &patch)?;
        if !patch.is_empty() {
            // A closed queue means the campaign already ended; nothing to apply.
            let _ = self.tx.send(Command::Patch(patch));
        }
        Ok(next)
    }

    pub fn abort(&self) {
        let _ = self.tx.send(Command::Abort);
    }
}

#[derive(Debug, Clone)]
pub struct CampaignOutcome {
    pub curve: IVCurve,
    pub state: CampaignState,
}

impl CampaignOutcome {
    pub fn aborted(&self) -> bool {
        self.state.phase == Phase::Aborted
    }
}

pub struct Campaign {
    plan: ScanPlan,
    params: SteadyStateParams,
    loop_params: TemperatureLoopParams,
    plant: Plant,
    inbox: Option<Receiver<Command>>,
    pending: VecDeque<ParamsPatch>,
    abort_requested: bool,
    state: CampaignState,
    curve: IVCurve,
}

impl Campaign {
    pub fn new(
        plan: ScanPlan,
        params: SteadyStateParams,
        loop_params: TemperatureLoopParams,
        plant: Plant,
    ) -> Result<Self, CampaignError> {
        let total = plan_voltages(&plan)?.len();
        let state = CampaignState {
            phase: Phase::OvenStabilizing,
            live_params: params,
            current_voltage: plant.applied_voltage(),
            current_index: None,
            points_done: 0,
            total_points: total,
            sp_oven_c: plant.sp_oven_c(),
            oven_c: plant.oven_c(),
            cell_c: plant.cell_c(),
            virtual_time_s: plant.now_s(),
            pending_patches: 0,
        };
        Ok(Self {
            plan,
            params,
            loop_params,
            plant,
            inbox: None,
            pending: VecDeque::new(),
            abort_requested: false,
            state,
            curve: IVCurve::default(),
        })
    }

    pub fn with_commands(mut self, inbox: Receiver<Command>) -> Self {
        self.inbox = Some(inbox);
        self
    }

    pub fn state(&self) -> &CampaignState {
        &self.state
    }

    pub fn plant(&self) -> &Plant {
        &self.plant
    }

    fn drain_commands(&mut self) {
        let Some(inbox) = &self.inbox else { return };
        loop {
            match inbox.try_recv() {
                Ok(Command::Abort) => self.abort_requested = true,
                Ok(Command::Patch(p)) => self.pending.push_back(p),
                Err(TryRecvError::Empty | TryRecvError::Disconnected) => break,
            }
        }
        self.state.pending_patches = self.pending.len();
    }

    fn refresh(&mut self, sink: &mut dyn CampaignSink) {
        self.state.live_params = self.params;
        self.state.sp_oven_c = self.plant.sp_oven_c();
        self.state.oven_c = self.plant.oven_c();
        self.state.cell_c = self.plant.cell_c();
        self.state.virtual_time_s = self.plant.now_s();
        self.state.current_voltage = self.plant.applied_voltage();
        self.state.pending_patches = self.pending.len();
        sink.state(&self.state);
    }

    fn enter(&mut self, phase: Phase, sink: &mut dyn CampaignSink) -> Result<(), CampaignError> {
        self.state.phase = phase;
        sink.event(&CampaignEvent::Phase {
            t_s: self.plant.now_s(),
            phase,
        })?;
        self.refresh(sink);
        Ok(())
    }

    fn apply_pending(&mut self, since_apply_s: u32, sink: &mut dyn CampaignSink) -> Result<(), CampaignError> {
        while let Some(patch) = self.pending.pop_front() {
            match update_live_params(&self.params, &patch) {
                Ok(next) => {
                    self.params = next;
                    sink.event(&CampaignEvent::ParamsApplied {
                        t_s: self.plant.now_s(),
                        since_apply_s,
                        params: next,
                    })?;
                }
                Err(errors) => sink.event(&CampaignEvent::ParamsRejected {
                    t_s: self.plant.now_s(),
                    errors,
                })?,
            }
        }
        Ok(())
    }

    fn abort(mut self, sink: &mut dyn CampaignSink) -> Result<CampaignOutcome, CampaignError> {
        sink.event(&CampaignEvent::Aborted {
            t_s: self.plant.now_s(),
        })?;
        self.enter(Phase::Aborted, sink)?;
        Ok(CampaignOutcome {
            curve: self.curve,
            state: self.state,
        })
    }

    pub fn run(mut self, sink: &mut dyn CampaignSink) -> Result<CampaignOutcome, CampaignError> {
        let voltages = plan_voltages(&self.plan)?;
        self.enter(Phase::OvenStabilizing, sink)?;

        let stabilized = {
            let Campaign {
                plant,
                loop_params,
                inbox,
                pending,
                abort_requested,
                state,
                ..
            } = &mut self;
            let mut sink_err = None;
            let mut observer = |plant: &Plant, event: Option<StabilizeEvent>| {
                if let Some(inbox) = inbox.as_ref() {
                    while let Ok(cmd) = inbox.try_recv() {
                        match cmd {
                            Command::Abort => *abort_requested = true,
                            Command::Patch(p) => pending.push_back(p),
                        }
                    }
                }
                let logged = match event {
                    None => {
                        sink.tick();
                        Ok(())
                    }
                    Some(StabilizeEvent::SetpointSent { t_s, sp_oven_c }) => {
                        sink.event(&CampaignEvent::SetpointSent { t_s, sp_oven_c })
                    }
                    Some(StabilizeEvent::OvenCheck {
                        t_s,
                        oven_c,
                        sp_oven_c,
                        within,
                    }) => {
                        let r = sink.event(&CampaignEvent::OvenCheck {
                            t_s,
                            oven_c,
                            sp_oven_c,
                            within,
                        });
                        if within && r.is_ok() {
                            state.phase = Phase::CellStabilizing;
                            sink.event(&CampaignEvent::Phase {
                                t_s,
                                phase: Phase::CellStabilizing,
                            })
                        } else {
                            r
                        }
                    }
                    Some(StabilizeEvent::CellCheck {
                        t_s,
                        cell_c,
                        drift_c,
                        within,
                    }) => sink.event(&CampaignEvent::CellCheck {
                        t_s,
                        cell_c,
                        drift_c,
                        within,
                    }),
                };
                if let Err(e) = logged {
                    sink_err = Some(e);
                    return ControlFlow::Break(());
                }
                state.sp_oven_c = plant.sp_oven_c();
                state.oven_c = plant.oven_c();
                state.cell_c = plant.cell_c();
                state.virtual_time_s = plant.now_s();
                state.pending_patches = pending.len();
                sink.state(state);
                if *abort_requested {
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                }
            };
            let result = stabilize_temperatures(loop_params, plant, &mut observer);
            if let Some(e) = sink_err {
                return Err(e);
            }
            result?
        };
        if matches!(stabilized, Stabilization::Aborted) {
            return self.abort(sink);
        }

        self.enter(Phase::Scanning, sink)?;
        let t_on = self.plant.heater().t_on_s();
        let filter = check_filter_condition(t_on, self.plant.electrometer());
        sink.event(&CampaignEvent::FilterCondition {
            t_s: self.plant.now_s(),
            t_on_s: t_on,
            window_s: self.plant.electrometer().window_s(),
            margin_s: filter.margin_s,
            satisfied: filter.satisfied,
        })?;

        for (index, (branch, voltage)) in voltages.into_iter().enumerate() {
            match self.measure_voltage(index, branch, voltage, sink)? {
                Some(point) => {
                    sink.point(&point)?;
                    self.curve.points.push(point);
                    self.state.points_done = self.curve.len();
                    sink.event(&CampaignEvent::PointPersisted {
                        t_s: self.plant.now_s(),
                        point,
                    })?;
                    self.refresh(sink);
                }
                None => return self.abort(sink),
            }
        }

        self.enter(Phase::Analyzing, sink)?;
        sink.analyze(&self.curve)?;
        self.enter(Phase::Done, sink)?;
        Ok(CampaignOutcome {
            curve: self.curve,
            state: self.state,
        })
    }

    /// Settles and measures one voltage; `None` when aborted.
    fn measure_voltage(
        &mut self,
        index: usize,
        branch: Branch,
        voltage: f64,
        sink: &mut dyn CampaignSink,
    ) -> Result<Option<IVPoint>, CampaignError> {
        self.plant.apply_voltage(voltage)?;
        let applied_ns = self.plant.now_ns();
        self.state.current_index = Some(index);
        sink.begin_voltage(index, branch, voltage)?;
        sink.event(&CampaignEvent::VoltageApplied {
            t_s: self.plant.now_s(),
            index,
            branch,
            e_app_v: voltage,
        })?;
        self.refresh(sink);

        let mut trace: Vec<f64> = Vec::new();
        let mut next_boundary = self.params.np_s;
        let mut detected: Option<(u32, u32)> = None;
        let mut t: u32 = 0;
        loop {
            t += 1;
            self.plant.advance_to(applied_ns + u64::from(t) * NS_PER_S);
            sink.tick();
            self.drain_commands();
            if self.abort_requested {
                return Ok(None);
            }
            let sample = self.plant.electrometer_read();
            trace.push(sample.filtered_a);
            sink.sample(&sample)?;

            if t == next_boundary {
                self.apply_pending(t, sink)?;
                if detected.is_none() {
                    if let CheckOutcome::Steady { delta_a } = steady_state_check(&trace, &self.params, t) {
                        detected = Some((t, self.params.nm_s));
                        sink.event(&CampaignEvent::Detection {
                            t_s: self.plant.now_s(),
                            index,
                            e_app_v: voltage,
                            settled_s: t,
                            delta_a,
                        })?;
                    }
                }
                next_boundary = t + self.params.np_s;
            }

            match detected {
                Some((k, nm)) => {
                    if let Some(i_ss) = measure_steady_current(&trace, k, nm) {
                        return Ok(Some(IVPoint {
                            index,
                            e_app_v: voltage,
                            i_ss_a: i_ss,
                            branch,
                            t_settled_s: f64::from(k),
                            status: PointStatus::Measured,
                        }));
                    }
                }
                None if f64::from(t) >= self.params.timeout_s => {
                    sink.event(&CampaignEvent::Timeout {
                        t_s: self.plant.now_s(),
                        index,
                        e_app_v: voltage,
                    })?;
                    let tail = (self.params.nw_s as usize).min(trace.len());
                    let last = &trace[trace.len() - tail..];
                    return Ok(Some(IVPoint {
                        index,
                        e_app_v: voltage,
                        i_ss_a: last.iter().sum::<f64>() / tail as f64,
                        branch,
                        t_settled_s: f64::from(t),
                        status: PointStatus::Timeout,
                    }));
                }
                None => {}
            }
            self.refresh(sink);
        }
    }
}

/// Runs a campaign without a command queue.
pub fn run_campaign(
    plan: ScanPlan,
    params: SteadyStateParams,
    loop_params: TemperatureLoopParams,
    plant: Plant,
    sink: &mut dyn CampaignSink,
) -> Result<IVCurve, CampaignError> {
    Ok(Campaign::new(plan, params, loop_params, plant)?.run(sink)?.curve)
}
