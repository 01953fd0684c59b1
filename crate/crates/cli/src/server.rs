//! HTTP and server-sent-event service around one campaign at a time.
//!
//! The campaign runs on its own thread. Its sink writes the output files
//! first, then updates the shared snapshot and broadcasts to subscribers, so
//! anything a client sees is already on disk.

use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use hebb_core::acquisition::{
    update_live_params, Branch, CampaignControl, CampaignEvent, CampaignSink, CampaignState, IVCurve, IVPoint,
    ParamsPatch, Phase, SteadyStateParams,
};
use hebb_core::error::{CampaignError, ConfigError, FieldError};
use hebb_core::files::{parse_iv, read_conductivity, read_slopes, FileSink, CONDUCTIVITY_FILE, IV_FILE, SLOPES_FILE};
use hebb_core::sim::CurrentSample;
use hebb_core::workbench::simulate_with;
use hebb_core::CampaignConfig;
use serde::Serialize;
use serde_json::json;
use tokio::sync::broadcast;
use tower_http::services::ServeDir;

/// Real seconds per virtual second unless told otherwise.
pub const DEFAULT_TIME_RATIO: f64 = 0.05;

const STREAM_CAPACITY: usize = 1024;

pub struct ServiceOptions {
    pub config: CampaignConfig,
    /// Each started campaign writes into a numbered directory below this.
    pub out_root: PathBuf,
    pub time_ratio: f64,
    pub ui_dir: PathBuf,
}

#[derive(Debug, Clone)]
struct StreamMessage {
    event: &'static str,
    data: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceSnapshot {
    pub index: usize,
    pub branch: Branch,
    pub e_app_v: f64,
    pub samples: Vec<CurrentSample>,
}

#[derive(Debug, Default)]
struct Live {
    state: Option<CampaignState>,
    trace: Option<TraceSnapshot>,
    running: bool,
    error: Option<String>,
}

struct Run {
    control: CampaignControl,
    live: Arc<RwLock<Live>>,
    dir: PathBuf,
    thread: Option<JoinHandle<()>>,
}

struct Inner {
    config: RwLock<CampaignConfig>,
    out_root: PathBuf,
    time_ratio: f64,
    ui_dir: PathBuf,
    stream: broadcast::Sender<StreamMessage>,
    run: Mutex<Option<Run>>,
    started: AtomicUsize,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(opts: ServiceOptions) -> Self {
        let (stream, _) = broadcast::channel(STREAM_CAPACITY);
        Self(Arc::new(Inner {
            config: RwLock::new(opts.config),
            out_root: opts.out_root,
            time_ratio: opts.time_ratio.max(0.0),
            ui_dir: opts.ui_dir,
            stream,
            run: Mutex::new(None),
            started: AtomicUsize::new(0),
        }))
    }

    /// Waits for the current campaign thread, if any, to finish.
    pub fn join_current(&self) {
        let thread = self.0.run.lock().unwrap().as_mut().and_then(|r| r.thread.take());
        if let Some(t) = thread {
            let _ = t.join();
        }
    }

    fn current(&self) -> Option<(CampaignControl, Arc<RwLock<Live>>, PathBuf)> {
        let run = self.0.run.lock().unwrap();
        run.as_ref().map(|r| (r.control.clone(), r.live.clone(), r.dir.clone()))
    }
}

fn broadcast(tx: &broadcast::Sender<StreamMessage>, event: &'static str, data: &impl Serialize) {
    // No subscribers is fine; nothing waits on the stream.
    let _ = tx.send(StreamMessage {
        event,
        data: serde_json::to_string(data).expect("stream payloads serialize"),
    });
}

fn event_name(event: &CampaignEvent) -> &'static str {
    match event {
        CampaignEvent::Phase { .. } => "phase",
        CampaignEvent::SetpointSent { .. } => "setpoint_sent",
        CampaignEvent::OvenCheck { .. } => "oven_check",
        CampaignEvent::CellCheck { .. } => "cell_check",
        CampaignEvent::FilterCondition { .. } => "filter_condition",
        CampaignEvent::VoltageApplied { .. } => "voltage_applied",
        CampaignEvent::ParamsApplied { .. } => "params_applied",
        CampaignEvent::ParamsRejected { .. } => "params_rejected",
        CampaignEvent::Detection { .. } => "detection",
        CampaignEvent::Timeout { .. } => "timeout",
        CampaignEvent::PointPersisted { .. } => "point_persisted",
        CampaignEvent::Aborted { .. } => "aborted",
    }
}

/// Sleeps so that virtual seconds pass at the configured real-time ratio.
struct Pace {
    ratio: f64,
    start: Instant,
    ticks: u32,
}

impl Pace {
    fn tick(&mut self) {
        if self.ratio <= 0.0 {
            return;
        }
        self.ticks += 1;
        let due = self.start + Duration::from_secs_f64(self.ratio * f64::from(self.ticks));
        let now = Instant::now();
        if due > now {
            std::thread::sleep(due - now);
        }
    }
}

struct ServiceSink {
    files: FileSink,
    live: Arc<RwLock<Live>>,
    stream: broadcast::Sender<StreamMessage>,
    pace: Pace,
    announced: Option<(Phase, usize, SteadyStateParams)>,
}

#[derive(Serialize)]
struct SampleMessage<'a> {
    index: usize,
    e_app_v: f64,
    #[serde(flatten)]
    sample: &'a CurrentSample,
}

impl CampaignSink for ServiceSink {
    fn event(&mut self, event: &CampaignEvent) -> Result<(), CampaignError> {
        self.files.event(event)?;
        broadcast(&self.stream, event_name(event), event);
        Ok(())
    }

    fn begin_voltage(&mut self, index: usize, branch: Branch, e_app_v: f64) -> Result<(), CampaignError> {
        self.files.begin_voltage(index, branch, e_app_v)?;
        self.live.write().unwrap().trace = Some(TraceSnapshot {
            index,
            branch,
            e_app_v,
            samples: Vec::new(),
        });
        Ok(())
    }

    fn sample(&mut self, sample: &CurrentSample) -> Result<(), CampaignError> {
        self.files.sample(sample)?;
        let mut live = self.live.write().unwrap();
        if let Some(trace) = live.trace.as_mut() {
            trace.samples.push(*sample);
            let msg = SampleMessage {
                index: trace.index,
                e_app_v: trace.e_app_v,
                sample,
            };
            broadcast(&self.stream, "sample", &msg);
        }
        Ok(())
    }

    fn point(&mut self, point: &IVPoint) -> Result<(), CampaignError> {
        self.files.point(point)
    }

    fn state(&mut self, state: &CampaignState) {
        self.files.state(state);
        self.live.write().unwrap().state = Some(state.clone());
        let key = (state.phase, state.points_done, state.live_params);
        if self.announced != Some(key) {
            self.announced = Some(key);
            broadcast(&self.stream, "state", state);
        }
    }

    fn tick(&mut self) {
        self.pace.tick();
    }

    fn analyze(&mut self, curve: &IVCurve) -> Result<(), CampaignError> {
        self.files.analyze(curve)
    }
}

fn field_errors(status: StatusCode, errors: &[FieldError]) -> Response {
    (status, Json(json!({ "errors": errors }))).into_response()
}

fn message(status: StatusCode, text: impl Into<String>) -> Response {
    (status, Json(json!({ "error": text.into() }))).into_response()
}

fn config_error(err: ConfigError) -> Response {
    match err {
        ConfigError::Invalid(errors) => field_errors(StatusCode::UNPROCESSABLE_ENTITY, &errors),
        other => message(StatusCode::BAD_REQUEST, other.to_string()),
    }
}

async fn start_campaign(State(app): State<AppState>, body: Bytes) -> Response {
    let config = if body.iter().all(u8::is_ascii_whitespace) {
        app.0.config.read().unwrap().clone()
    } else {
        match std::str::from_utf8(&body)
            .map_err(|e| ConfigError::Syntax(e.to_string()))
            .and_then(CampaignConfig::from_json)
        {
            Ok(c) => c,
            Err(e) => return config_error(e),
        }
    };
    let initial = match config.campaign() {
        Ok(c) => c.state().clone(),
        Err(e) => return message(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
    };

    let mut slot = app.0.run.lock().unwrap();
    if let Some(run) = slot.as_ref() {
        if run.live.read().unwrap().running {
            return message(StatusCode::CONFLICT, "a campaign is already running");
        }
    }
    let n = app.0.started.fetch_add(1, Ordering::SeqCst);
    let dir = app.0.out_root.join(format!("campaign-{n:03}"));
    let (control, inbox) = CampaignControl::channel();
    let live = Arc::new(RwLock::new(Live {
        state: Some(initial.clone()),
        running: true,
        ..Live::default()
    }));
    let thread = {
        let live = live.clone();
        let stream = app.0.stream.clone();
        let dir = dir.clone();
        let ratio = app.0.time_ratio;
        std::thread::spawn(move || {
            let sink_live = live.clone();
            let sink_stream = stream.clone();
            let result = simulate_with(&config, &dir, inbox, move |files| ServiceSink {
                files,
                live: sink_live,
                stream: sink_stream,
                pace: Pace {
                    ratio,
                    start: Instant::now(),
                    ticks: 0,
                },
                announced: None,
            });
            let mut live = live.write().unwrap();
            live.running = false;
            if let Err(e) = result {
                live.error = Some(e.to_string());
                broadcast(&stream, "error", &json!({ "error": e.to_string() }));
            }
        })
    };
    *slot = Some(Run {
        control,
        live,
        dir: dir.clone(),
        thread: Some(thread),
    });
    (
        StatusCode::ACCEPTED,
        Json(json!({ "output_dir": dir, "state": initial })),
    )
        .into_response()
}

async fn abort_campaign(State(app): State<AppState>) -> Response {
    match app.current() {
        Some((control, live, _)) if live.read().unwrap().running => {
            control.abort();
            (StatusCode::ACCEPTED, Json(json!({ "abort": "requested" }))).into_response()
        }
        _ => message(StatusCode::CONFLICT, "no campaign is running"),
    }
}

#[derive(Serialize)]
struct CampaignView {
    #[serde(flatten)]
    state: CampaignState,
    running: bool,
    output_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

async fn get_campaign(State(app): State<AppState>) -> Response {
    let Some((_, live, dir)) = app.current() else {
        return message(StatusCode::NOT_FOUND, "no campaign has been started");
    };
    let live = live.read().unwrap();
    let view = CampaignView {
        state: live.state.clone().expect("set when the run starts"),
        running: live.running,
        output_dir: dir,
        error: live.error.clone(),
    };
    Json(view).into_response()
}

fn running_params(app: &AppState) -> Option<(CampaignControl, SteadyStateParams)> {
    let (control, live, _) = app.current()?;
    let live = live.read().unwrap();
    if !live.running {
        return None;
    }
    live.state.as_ref().map(|s| (control, s.live_params))
}

async fn get_params(State(app): State<AppState>) -> Response {
    let params = match running_params(&app) {
        Some((_, p)) => p,
        None => app.0.config.read().unwrap().steady_state,
    };
    Json(params).into_response()
}

async fn patch_params(State(app): State<AppState>, body: Bytes) -> Response {
    let patch: ParamsPatch = match serde_json::from_slice(&body) {
        Ok(p) => p,
        Err(e) => {
            return field_errors(
                StatusCode::UNPROCESSABLE_ENTITY,
                &[FieldError::new("body", e.to_string())],
            )
        }
    };
    if let Some((control, current)) = running_params(&app) {
        return match control.update_live_params(&current, patch) {
            Ok(next) => (
                StatusCode::ACCEPTED,
                Json(json!({ "params": next, "applies_at": "next_np_boundary" })),
            )
                .into_response(),
            Err(errors) => field_errors(StatusCode::UNPROCESSABLE_ENTITY, &errors),
        };
    }
    let mut config = app.0.config.write().unwrap();
    match update_live_params(&config.steady_state, &patch) {
        Ok(next) => {
            config.steady_state = next;
            Json(json!({ "params": next, "applies_at": "next_campaign" })).into_response()
        }
        Err(errors) => field_errors(StatusCode::UNPROCESSABLE_ENTITY, &errors),
    }
}

#[allow(clippy::result_large_err)]
fn current_dir(app: &AppState) -> Result<PathBuf, Response> {
    app.current()
        .map(|(_, _, dir)| dir)
        .ok_or_else(|| message(StatusCode::NOT_FOUND, "no campaign has been started"))
}

/// The complete rows of `iv.csv` as they are on disk right now.
#[allow(clippy::result_large_err)]
fn read_complete_rows(path: &Path) -> Result<Vec<IVPoint>, Response> {
    let text = std::fs::read_to_string(path).map_err(|e| message(StatusCode::NOT_FOUND, e.to_string()))?;
    let complete = match text.rfind('\n') {
        Some(end) => &text[..=end],
        None => "",
    };
    if complete.is_empty() {
        return Ok(Vec::new());
    }
    parse_iv(path, complete)
        .map(|c| c.points)
        .map_err(|e| message(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

async fn get_iv(State(app): State<AppState>) -> Response {
    let dir = match current_dir(&app) {
        Ok(d) => d,
        Err(r) => return r,
    };
    match read_complete_rows(&dir.join(IV_FILE)) {
        Ok(points) => Json(points).into_response(),
        Err(r) => r,
    }
}

async fn get_conductivity(State(app): State<AppState>) -> Response {
    let dir = match current_dir(&app) {
        Ok(d) => d,
        Err(r) => return r,
    };
    let path = dir.join(CONDUCTIVITY_FILE);
    if !path.exists() {
        return message(StatusCode::NOT_FOUND, "the campaign has not been analyzed yet");
    }
    let result = read_conductivity(&path).and_then(|c| Ok((c, read_slopes(&dir.join(SLOPES_FILE))?)));
    match result {
        Ok((conductivity, slopes)) => Json(json!({ "conductivity": conductivity, "slopes": slopes })).into_response(),
        Err(e) => message(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn get_current_trace(State(app): State<AppState>) -> Response {
    let trace = app
        .current()
        .and_then(|(_, live, _)| live.read().unwrap().trace.clone());
    match trace {
        Some(t) => Json(t).into_response(),
        None => message(StatusCode::NOT_FOUND, "no voltage has been applied yet"),
    }
}

async fn stream(State(app): State<AppState>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let rx = app.0.stream.subscribe();
    // A subscriber that falls behind the buffer is dropped rather than slowing acquisition.
    let events = futures::stream::unfold(rx, |mut rx| async move {
        match rx.recv().await {
            Ok(msg) => Some((Ok(Event::default().event(msg.event).data(msg.data)), rx)),
            Err(_) => None,
        }
    });
    Sse::new(events).keep_alive(KeepAlive::default())
}

pub fn router(app: AppState) -> Router {
    let ui = ServeDir::new(&app.0.ui_dir);
    Router::new()
        .route("/api/campaign", post(start_campaign).get(get_campaign))
        .route("/api/campaign/abort", post(abort_campaign))
        .route("/api/params", get(get_params).patch(patch_params))
        .route("/api/iv", get(get_iv))
        .route("/api/conductivity", get(get_conductivity))
        .route("/api/trace/current", get(get_current_trace))
        .route("/api/stream", get(stream))
        .fallback_service(ui)
        .with_state(app)
}

/// Binds `listen` and serves until Ctrl-C.
pub async fn serve(opts: ServiceOptions, listen: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(listen).await?;
    println!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(opts)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
