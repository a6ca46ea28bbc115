//! HTTP player service.
//!
//! One scheduler task owns the [`Session`]. Handlers talk to it over an mpsc
//! command channel, read state from a watch channel, and subscribe to emitted
//! frames through a broadcast channel; a lagging subscriber loses frames
//! rather than slowing the scheduler down.

use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use hreye_core::controller::{ControllerError, Emission};
use hreye_core::lucemes::{LucemeError, LucemeId};
use hreye_core::{
    ActiveLucemeId, Catalog, ColorName, ColorRGBA, ControllerMode, EyeId, GazeAngle, LedFrame, OcularLucemeId,
};
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, mpsc, oneshot, watch};

use crate::driver_sim::DriverSim;
use crate::session::{Realized, Session};

pub const FRAME_CHANNEL_CAPACITY: usize = 64;

// ---------------------------------------------------------------------------
// wire views

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeView {
    #[serde(rename = "type")]
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angle: Option<u16>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub color: Option<[u8; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intensity: Option<f64>,
    pub label: String,
}

impl From<ControllerMode> for ModeView {
    fn from(mode: ControllerMode) -> Self {
        let mut v = ModeView {
            kind: "idle",
            id: None,
            angle: None,
            level: None,
            color: None,
            intensity: None,
            label: mode.to_string(),
        };
        match mode {
            ControllerMode::Idle => {}
            ControllerMode::Active { id, battery_level } => {
                v.kind = "active";
                v.id = Some(id.name().to_string());
                v.level = battery_level;
            }
            ControllerMode::Ocular(id) => {
                v.kind = "ocular";
                v.id = Some(id.to_string());
                if let OcularLucemeId::Gaze(g) = id {
                    v.angle = Some(g.degrees());
                }
            }
            ControllerMode::Functional { color, intensity } => {
                v.kind = "functional";
                v.color = Some(color.to_array());
                v.intensity = Some(intensity);
            }
        }
        v
    }
}

fn eye_name(eye: EyeId) -> &'static str {
    match eye {
        EyeId::Left => "left",
        EyeId::Right => "right",
    }
}

fn pixels(frame: &LedFrame) -> Vec<[u8; 4]> {
    frame.pixels.iter().map(|p| p.to_array()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EyeView {
    pub eye: &'static str,
    pub sequence: Option<u32>,
    pub calibration_offset_deg: f64,
    pub pixels: Vec<[u8; 4]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SequenceProgress {
    pub started: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateView {
    pub mode: ModeView,
    pub fps: u32,
    pub frame_index: u64,
    pub device_connected: bool,
    pub dropped: [u64; 2],
    pub sequence: Option<SequenceProgress>,
    pub eyes: Vec<EyeView>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameEvent {
    pub eye: &'static str,
    pub sequence: u32,
    pub timestamp_ms: u64,
    pub pixels: Vec<[u8; 4]>,
}

impl FrameEvent {
    fn from_emission(e: &Emission) -> [FrameEvent; 2] {
        e.messages.map(|m| FrameEvent {
            eye: eye_name(m.eye),
            sequence: m.sequence,
            timestamp_ms: e.timestamp_ms,
            pixels: pixels(&m.frame),
        })
    }
}

fn state_view(session: &Session, sim: Option<&DriverSim>) -> StateView {
    let c = session.controller();
    let eyes = match sim {
        Some(sim) => EyeId::BOTH
            .iter()
            .map(|&eye| {
                let s = sim.snapshot(eye);
                EyeView {
                    eye: eye_name(eye),
                    sequence: s.sequence,
                    calibration_offset_deg: s.calibration_offset_deg,
                    pixels: pixels(&s.frame),
                }
            })
            .collect(),
        None => {
            let emitted = c.frame_index() > 0;
            session
                .last_emitted()
                .iter()
                .map(|m| EyeView {
                    eye: eye_name(m.eye),
                    sequence: emitted.then_some(m.sequence),
                    calibration_offset_deg: 0.0,
                    pixels: pixels(&m.frame),
                })
                .collect()
        }
    };
    StateView {
        mode: c.mode().into(),
        fps: c.fps(),
        frame_index: c.frame_index(),
        device_connected: session.device().is_connected(),
        dropped: session.dropped(),
        sequence: c
            .sequence_progress()
            .map(|(started, total)| SequenceProgress { started, total }),
        eyes,
    }
}

// ---------------------------------------------------------------------------
// scheduler

type Reply<T> = oneshot::Sender<Result<T, ControllerError>>;

#[derive(Debug)]
pub enum Command {
    SetMode(ControllerMode, Reply<StateView>),
    Sequence {
        ids: Vec<LucemeId>,
        dwell_ms: u32,
        randomize: bool,
        seed: u64,
        reply: Reply<(Realized, StateView)>,
    },
    /// Emits `n` frames immediately (used when the wall-clock timer is off).
    Advance(u64, oneshot::Sender<StateView>),
    TakeLog(oneshot::Sender<Option<Vec<u8>>>),
}

#[derive(Debug, Clone)]
pub struct Handle {
    commands: mpsc::Sender<Command>,
    state: watch::Receiver<Arc<StateView>>,
    frames: broadcast::Sender<FrameEvent>,
    catalog: Arc<Catalog>,
}

#[derive(Debug, Clone)]
pub struct SchedulerConfig {
    /// Emit on a wall-clock timer. When false, frames advance only through
    /// [`Command::Advance`].
    pub realtime: bool,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig { realtime: true }
    }
}

/// Spawns the scheduler on the current tokio runtime.
pub fn spawn_scheduler(session: Session, sim: Option<Arc<DriverSim>>, config: SchedulerConfig) -> Handle {
    let (cmd_tx, mut cmd_rx) = mpsc::channel::<Command>(32);
    let (state_tx, state_rx) = watch::channel(Arc::new(state_view(&session, sim.as_deref())));
    let (frame_tx, _) = broadcast::channel(FRAME_CHANNEL_CAPACITY);
    let catalog = Arc::new(session.controller().catalog().clone());
    let frames = frame_tx.clone();
    let period = Duration::from_nanos(1_000_000_000 / session.controller().fps() as u64);

    tokio::spawn(async move {
        let mut session = session;
        let mut timer = tokio::time::interval(period);
        timer.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
        let publish = |session: &Session| {
            let _ = state_tx.send(Arc::new(state_view(session, sim.as_deref())));
        };
        let emit = |session: &mut Session| {
            let e = session.tick();
            for ev in FrameEvent::from_emission(&e) {
                // no subscribers is fine
                let _ = frame_tx.send(ev);
            }
        };
        loop {
            tokio::select! {
                cmd = cmd_rx.recv() => {
                    let Some(cmd) = cmd else { break };
                    match cmd {
                        Command::SetMode(mode, reply) => {
                            let r = session.set_mode(mode).map(|()| state_view(&session, sim.as_deref()));
                            let _ = reply.send(r);
                        }
                        Command::Sequence { ids, dwell_ms, randomize, seed, reply } => {
                            let r = session
                                .play_sequence(&ids, dwell_ms, randomize, seed)
                                .map(|order| (order, state_view(&session, sim.as_deref())));
                            let _ = reply.send(r);
                        }
                        Command::Advance(n, reply) => {
                            for _ in 0..n {
                                emit(&mut session);
                            }
                            let _ = reply.send(state_view(&session, sim.as_deref()));
                        }
                        Command::TakeLog(reply) => {
                            let log = session.take_log();
                            session.record();
                            let _ = reply.send(log);
                        }
                    }
                    publish(&session);
                }
                _ = timer.tick(), if config.realtime => {
                    emit(&mut session);
                    publish(&session);
                }
            }
        }
    });

    Handle {
        commands: cmd_tx,
        state: state_rx,
        frames,
        catalog,
    }
}

impl Handle {
    pub fn state(&self) -> Arc<StateView> {
        self.state.borrow().clone()
    }

    pub fn subscribe(&self) -> broadcast::Receiver<FrameEvent> {
        self.frames.subscribe()
    }

    async fn request<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> Command) -> Result<T, ApiError> {
        let (tx, rx) = oneshot::channel();
        self.commands
            .send(make(tx))
            .await
            .map_err(|_| ApiError::unavailable())?;
        rx.await.map_err(|_| ApiError::unavailable())
    }

    pub async fn set_mode(&self, mode: ControllerMode) -> Result<StateView, ApiError> {
        self.request(|tx| Command::SetMode(mode, tx)).await?.map_err(ApiError::from)
    }

    pub async fn play_sequence(
        &self,
        ids: Vec<LucemeId>,
        dwell_ms: u32,
        randomize: bool,
        seed: u64,
    ) -> Result<(Realized, StateView), ApiError> {
        self.request(|reply| Command::Sequence {
            ids,
            dwell_ms,
            randomize,
            seed,
            reply,
        })
        .await?
        .map_err(ApiError::from)
    }

    pub async fn advance(&self, frames: u64) -> Result<StateView, ApiError> {
        self.request(|tx| Command::Advance(frames, tx)).await
    }

    /// Returns the recorded log so far and starts a fresh one.
    pub async fn take_log(&self) -> Result<Option<Vec<u8>>, ApiError> {
        self.request(Command::TakeLog).await
    }
}

// ---------------------------------------------------------------------------
// errors

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn bad(code: &'static str, message: impl ToString) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code,
            message: message.to_string(),
        }
    }

    fn unavailable() -> Self {
        ApiError {
            status: StatusCode::SERVICE_UNAVAILABLE,
            code: "scheduler_stopped",
            message: "the scheduler is not running".into(),
        }
    }
}

impl From<LucemeError> for ApiError {
    fn from(e: LucemeError) -> Self {
        match e {
            LucemeError::UnknownLuceme(_) => ApiError {
                status: StatusCode::NOT_FOUND,
                code: "unknown_luceme",
                message: e.to_string(),
            },
            _ => ApiError::bad("invalid_parameter", e),
        }
    }
}

impl From<ControllerError> for ApiError {
    fn from(e: ControllerError) -> Self {
        match e {
            ControllerError::Luceme(e) => e.into(),
            e => ApiError::bad("invalid_parameter", e),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.code, "message": self.message });
        (self.status, Json(body)).into_response()
    }
}

// ---------------------------------------------------------------------------
// requests

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ColorSpec {
    Name(String),
    Rgba([u8; 4]),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeRequest {
    #[serde(rename = "type")]
    pub kind: String,
    pub id: Option<String>,
    pub angle: Option<i64>,
    pub level: Option<f64>,
    pub color: Option<ColorSpec>,
    pub intensity: Option<f64>,
}

impl ModeRequest {
    pub fn resolve(&self, catalog: &Catalog) -> Result<ControllerMode, ApiError> {
        match self.kind.to_ascii_lowercase().as_str() {
            "idle" => Ok(ControllerMode::Idle),
            "active" => {
                let id = self.id.as_deref().ok_or_else(|| ApiError::bad("missing_field", "active mode needs `id`"))?;
                let id: ActiveLucemeId = id.parse()?;
                Ok(ControllerMode::Active {
                    id,
                    battery_level: self.level,
                })
            }
            "ocular" => {
                let id = match (self.angle, self.id.as_deref()) {
                    (Some(deg), _) => OcularLucemeId::Gaze(GazeAngle::new(deg)?),
                    (None, Some(id)) => id.parse()?,
                    (None, None) => return Err(ApiError::bad("missing_field", "ocular mode needs `angle` or `id`")),
                };
                Ok(ControllerMode::Ocular(id))
            }
            "functional" => {
                let color = match &self.color {
                    None => catalog.palette.get(ColorName::ScleraWhite),
                    Some(ColorSpec::Name(n)) => {
                        let name: ColorName = n.parse().map_err(|e| ApiError::bad("invalid_parameter", e))?;
                        catalog.palette.get(name)
                    }
                    Some(ColorSpec::Rgba(c)) => ColorRGBA::from_array(*c),
                };
                Ok(ControllerMode::Functional {
                    color,
                    intensity: self.intensity.unwrap_or(1.0),
                })
            }
            other => Err(ApiError::bad("unknown_mode_type", format!("unknown mode type `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceRequest {
    pub ids: Vec<String>,
    pub dwell_ms: u32,
    #[serde(default)]
    pub randomize: bool,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SequenceResponse {
    pub order: Vec<String>,
    pub state: StateView,
}

#[derive(Debug, Clone, Serialize)]
pub struct CatalogEntry {
    pub id: String,
    pub gloss: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct CatalogView {
    pub active: Vec<CatalogEntry>,
    pub ocular: Vec<CatalogEntry>,
}

pub fn catalog_view() -> CatalogView {
    CatalogView {
        active: ActiveLucemeId::ALL
            .iter()
            .map(|id| CatalogEntry {
                id: id.name().to_string(),
                gloss: id.gloss(),
            })
            .collect(),
        ocular: OcularLucemeId::all()
            .map(|id| CatalogEntry {
                id: id.to_string(),
                gloss: id.gloss(),
            })
            .collect(),
    }
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad("malformed_body", e))
}

// ---------------------------------------------------------------------------
// routes

async fn get_state(State(h): State<Handle>) -> Json<StateView> {
    Json((*h.state()).clone())
}

async fn post_mode(State(h): State<Handle>, body: Bytes) -> Result<Json<StateView>, ApiError> {
    let req: ModeRequest = parse_json(&body)?;
    let mode = req.resolve(&h.catalog)?;
    Ok(Json(h.set_mode(mode).await?))
}

async fn post_sequence(State(h): State<Handle>, body: Bytes) -> Result<Json<SequenceResponse>, ApiError> {
    let req: SequenceRequest = parse_json(&body)?;
    let ids = req
        .ids
        .iter()
        .map(|s| s.parse::<LucemeId>())
        .collect::<Result<Vec<_>, _>>()?;
    let (realized, state) = h.play_sequence(ids, req.dwell_ms, req.randomize, req.seed).await?;
    Ok(Json(SequenceResponse {
        order: realized.order.iter().map(|id| id.to_string()).collect(),
        state,
    }))
}

async fn get_catalog() -> Json<CatalogView> {
    Json(catalog_view())
}

async fn get_frames(State(h): State<Handle>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let rx = h.subscribe();
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(ev) => {
                    let event = Event::default().event("frame").json_data(&ev).unwrap_or_default();
                    return Some((Ok(event), rx));
                }
                Err(broadcast::error::RecvError::Lagged(n)) => log::debug!("frame subscriber lagged by {n}"),
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}

pub fn router(handle: Handle, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/state", get(get_state))
        .route("/api/mode", post(post_mode))
        .route("/api/sequence", post(post_sequence))
        .route("/api/catalog", get(get_catalog))
        .route("/api/frames", get(get_frames))
        .with_state(handle);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(listen: &str, handle: Handle, static_dir: Option<PathBuf>) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(listen).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(handle, static_dir)).await?;
    Ok(())
}
