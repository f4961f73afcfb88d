//! HTTP API behind the operator console.
//!
//! One live session per process. Every log line the session writes is
//! republished on `/events` with a process-wide id, so a client can resume
//! with `?after=<id>` or `Last-Event-ID` and back-fill whatever it missed.
//!
//! | route                 | method | body / result                               |
//! |-----------------------|--------|---------------------------------------------|
//! | `/events`             | GET    | server-sent log records                     |
//! | `/session`            | GET    | session status                              |
//! | `/session`            | POST   | start `{scenario?, variant?, seed?, script?}` |
//! | `/session`            | DELETE | close the live session                      |
//! | `/utterance`          | POST   | `{text, interrupts_after_ms?, hold?}`       |
//! | `/scene`              | POST   | `{label, x, y, z}`                          |
//! | `/store`              | GET    | view-store manifest                         |
//! | `/frames/{hash}`      | GET    | stored frame as PNG                         |
//! | `/transcript`         | GET    | transcript turns                            |

use std::collections::VecDeque;
use std::convert::Infallible;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use situ_core::eval::{bundled, SceneEditSpec};
use situ_core::geometry::Point3;
use situ_core::runtime::{Runtime, UserTurn};
use situ_core::session::{transcript, BackendAdapter, LogLine, MockScripted};
use situ_core::simworld::PERSON_LABEL;
use situ_core::tools::SystemVariant;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, watch};

use crate::keyword::KeywordBackend;
use crate::{CliError, ServeArgs, EXIT_PORT_IN_USE};

const CHANNEL_CAPACITY: usize = 1024;

/// Defaults for sessions started without explicit settings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionDefaults {
    pub scenario: String,
    pub variant: SystemVariant,
    pub seed: Option<u64>,
    pub script: bool,
}

impl Default for SessionDefaults {
    fn default() -> Self {
        Self {
            scenario: "lamp_placement".into(),
            variant: SystemVariant::Full,
            seed: None,
            script: false,
        }
    }
}

/// A log line as published on the event stream.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamRecord {
    /// Process-wide, gapless, starting at 1.
    pub id: u64,
    pub session: u64,
    #[serde(flatten)]
    pub line: LogLine,
}

struct Live {
    id: u64,
    scenario: String,
    variant: SystemVariant,
    runtime: Runtime,
    published: usize,
    utterances: usize,
}

#[derive(Default)]
struct Inner {
    live: Option<Live>,
    next_session: u64,
    history: Vec<StreamRecord>,
    queued: Vec<SceneEditSpec>,
}

impl Inner {
    fn after(&self, id: u64) -> Vec<StreamRecord> {
        let start = (id as usize).min(self.history.len());
        self.history[start..].to_vec()
    }
}

pub struct AppState {
    inner: Mutex<Inner>,
    tx: broadcast::Sender<StreamRecord>,
    closing: watch::Sender<bool>,
    defaults: SessionDefaults,
}

impl AppState {
    pub fn new(defaults: SessionDefaults) -> Arc<Self> {
        Arc::new(Self {
            inner: Mutex::new(Inner::default()),
            tx: broadcast::channel(CHANNEL_CAPACITY).0,
            closing: watch::channel(false).0,
            defaults,
        })
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Moves lines the live session has written since the last call onto
    /// the stream.
    fn publish(&self, inner: &mut Inner) {
        let Some(live) = inner.live.as_mut() else { return };
        let lines = &live.runtime.log().lines()[live.published..];
        live.published += lines.len();
        for line in lines {
            let record = StreamRecord {
                id: inner.history.len() as u64 + 1,
                session: live.id,
                line: line.clone(),
            };
            inner.history.push(record.clone());
            // no subscribers is fine
            let _ = self.tx.send(record);
        }
    }

    /// Closes the live session with `reason`, publishing its close record.
    pub fn close_session(&self, reason: &str) -> Result<bool, String> {
        let mut inner = self.lock();
        let Some(live) = inner.live.as_mut() else {
            return Ok(false);
        };
        let closed = live.runtime.close(reason).map_err(|e| e.to_string());
        self.publish(&mut inner);
        inner.live = None;
        closed.map(|_| true)
    }

    /// Closes any live session and ends every open event stream.
    pub fn shutdown(&self) {
        if let Err(e) = self.close_session("shutdown") {
            eprintln!("error closing session: {e}");
        }
        self.closing.send_replace(true);
    }

    /// Everything published so far.
    pub fn history(&self) -> Vec<StreamRecord> {
        self.lock().history.clone()
    }
}

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self(status, message.into())
    }

    fn no_session() -> Self {
        Self::new(StatusCode::NOT_FOUND, "no active session")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/events", get(events))
        .route("/session", get(get_session).post(start_session).delete(end_session))
        .route("/utterance", post(utterance))
        .route("/scene", post(edit_scene))
        .route("/store", get(store))
        .route("/frames/{hash}", get(frame))
        .route("/transcript", get(get_transcript))
        .with_state(state)
}

fn status(live: &Live, last_event: u64) -> Value {
    let rt = &live.runtime;
    let axis = rt.world().pose().optical_axis();
    let yaw = axis.x().atan2(axis.z()).to_degrees();
    let pitch = (-axis.y()).atan2(axis.x().hypot(axis.z())).to_degrees();
    let origin = rt.world().pose().translation();
    let entities: Vec<Value> = rt
        .world()
        .scene()
        .entities()
        .map(|(label, p)| json!({ "label": label, "x": p.x, "y": p.y, "z": p.z }))
        .collect();
    json!({
        "active": true,
        "id": live.id,
        "scenario": live.scenario,
        "variant": live.variant,
        "backend": rt.backend_name(),
        "state": rt.session().state(),
        "directive": rt.directive(),
        "now_ms": rt.now_ms(),
        "utterances": live.utterances,
        "gaze": {
            "yaw_deg": yaw,
            "pitch_deg": pitch,
            "axis": [axis.x(), axis.y(), axis.z()],
            "origin": [origin.x, origin.y, origin.z],
        },
        "entities": entities,
        "store_stale": rt.store().is_stale(),
        "last_event": last_event,
    })
}

async fn get_session(State(app): State<Arc<AppState>>) -> Json<Value> {
    let inner = app.lock();
    let last = inner.history.len() as u64;
    Json(match &inner.live {
        Some(live) => status(live, last),
        None => json!({ "active": false, "queued_edits": inner.queued.len(), "last_event": last }),
    })
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRequest {
    pub scenario: Option<String>,
    pub variant: Option<SystemVariant>,
    pub seed: Option<u64>,
    pub script: Option<bool>,
}

async fn start_session(State(app): State<Arc<AppState>>, body: Option<Json<SessionRequest>>) -> ApiResult {
    let req = body.map(|Json(r)| r).unwrap_or_default();
    let mut inner = app.lock();
    if inner.live.is_some() {
        return Err(ApiError::new(StatusCode::CONFLICT, "a session is already running"));
    }
    let d = &app.defaults;
    let name = req.scenario.unwrap_or_else(|| d.scenario.clone());
    let scenario = bundled::scenario(&name)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no bundled scenario '{name}'")))?;
    let scene = bundled::scene(&scenario.scene)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no bundled scene '{}'", scenario.scene)))?;
    let variant = req.variant.unwrap_or(d.variant);
    let mut cfg = scenario.runtime_config(variant);
    cfg.seed = req.seed.or(d.seed).unwrap_or(cfg.seed);
    let backend: Box<dyn BackendAdapter> = if req.script.unwrap_or(d.script) {
        let mock = MockScripted::new(scenario.responses.clone(), cfg.seed)
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
        Box::new(mock)
    } else {
        Box::new(KeywordBackend::new(&scene, variant, cfg.seed))
    };
    let mut runtime = Runtime::new(scene, backend, cfg)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;

    let mut applied = Vec::new();
    let mut rejected = Vec::new();
    for edit in std::mem::take(&mut inner.queued) {
        match runtime.edit_scene(&edit.label, Point3::new(edit.x, edit.y, edit.z)) {
            Ok(()) => applied.push(edit.label),
            Err(e) => rejected.push(json!({ "label": edit.label, "error": e.to_string() })),
        }
    }

    inner.next_session += 1;
    inner.live = Some(Live {
        id: inner.next_session,
        scenario: name,
        variant,
        runtime,
        published: 0,
        utterances: 0,
    });
    app.publish(&mut inner);
    let last = inner.history.len() as u64;
    let mut body = status(inner.live.as_ref().expect("just started"), last);
    body["applied_edits"] = json!(applied);
    body["rejected_edits"] = json!(rejected);
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn end_session(State(app): State<Arc<AppState>>) -> ApiResult {
    match app.close_session("operator") {
        Ok(true) => Ok(Json(json!({ "closed": true })).into_response()),
        Ok(false) => Err(ApiError::no_session()),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e)),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtteranceRequest {
    pub text: String,
    #[serde(default)]
    pub interrupts_after_ms: Option<u64>,
    /// Leave the response in flight so the next utterance can cut it off.
    #[serde(default)]
    pub hold: bool,
}

async fn utterance(State(app): State<Arc<AppState>>, Json(req): Json<UtteranceRequest>) -> ApiResult {
    let text = req.text.trim();
    if text.is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "utterance text is empty"));
    }
    let mut inner = app.lock();
    let live = inner.live.as_mut().ok_or_else(ApiError::no_session)?;
    let before = live.runtime.outcomes().len();
    let turn = UserTurn {
        text: text.to_string(),
        speech_ms: None,
        interrupts_after_ms: req.interrupts_after_ms,
    };
    let mut result = live.runtime.user_turn(&turn);
    if result.is_ok() && !req.hold {
        result = live.runtime.settle_pending();
    }
    let index = live.utterances;
    live.utterances += 1;
    let settled: Vec<Value> = live.runtime.outcomes()[before..]
        .iter()
        .map(|o| json!({ "index": o.index, "tools": o.tools, "latency_ms": o.latency_ms, "interrupted": o.interrupted }))
        .collect();
    let body = json!({
        "turn": index,
        "settled": settled,
        "state": live.runtime.session().state(),
        "directive": live.runtime.directive(),
    });
    app.publish(&mut inner);
    result.map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json(body).into_response())
}

async fn edit_scene(State(app): State<Arc<AppState>>, Json(edit): Json<SceneEditSpec>) -> ApiResult {
    if ![edit.x, edit.y, edit.z].iter().all(|v| v.is_finite()) {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "position must be finite"));
    }
    let mut inner = app.lock();
    let Some(live) = inner.live.as_mut() else {
        // checked against the default scene; re-checked when a session starts
        let known = edit.label == PERSON_LABEL
            || bundled::scenario(&app.defaults.scenario)
                .and_then(|s| bundled::scene(&s.scene))
                .is_some_and(|scene| scene.object(&edit.label).is_some());
        if !known {
            return Err(ApiError::new(StatusCode::NOT_FOUND, format!("unknown label '{}'", edit.label)));
        }
        inner.queued.push(edit);
        let queued = inner.queued.len();
        return Ok((StatusCode::ACCEPTED, Json(json!({ "queued": queued }))).into_response());
    };
    if edit.label != PERSON_LABEL && live.runtime.world().scene().object(&edit.label).is_none() {
        return Err(ApiError::new(StatusCode::NOT_FOUND, format!("unknown label '{}'", edit.label)));
    }
    let result = live
        .runtime
        .settle_pending()
        .and_then(|_| live.runtime.edit_scene(&edit.label, Point3::new(edit.x, edit.y, edit.z)));
    let stale = live.runtime.store().is_stale();
    app.publish(&mut inner);
    result.map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json(json!({ "applied": true, "store_stale": stale })).into_response())
}

async fn store(State(app): State<Arc<AppState>>) -> ApiResult {
    let inner = app.lock();
    let live = inner.live.as_ref().ok_or_else(ApiError::no_session)?;
    let store = live.runtime.store();
    let records: Vec<Value> = store
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            json!({
                "index": i,
                "frame_id": r.frame_id,
                "frame_hash": r.frame_hash,
                "captured_at": r.captured_at,
                "target": r.target,
                "thumbnail": format!("/frames/{}", r.frame_hash),
            })
        })
        .collect();
    Ok(Json(json!({
        "session": live.id,
        "stale": store.is_stale(),
        "replace_on_sweep": store.replace_on_sweep(),
        "records": records,
    }))
    .into_response())
}

async fn frame(State(app): State<Arc<AppState>>, Path(hash): Path<String>) -> ApiResult {
    let inner = app.lock();
    let live = inner.live.as_ref().ok_or_else(ApiError::no_session)?;
    let bytes = live
        .runtime
        .store()
        .blob(&hash)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no stored frame '{hash}'")))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes.to_vec()).into_response())
}

async fn get_transcript(State(app): State<Arc<AppState>>) -> ApiResult {
    let inner = app.lock();
    let live = inner.live.as_ref().ok_or_else(ApiError::no_session)?;
    Ok(Json(transcript(live.runtime.log())).into_response())
}

#[derive(Debug, Default, Deserialize)]
pub struct EventsQuery {
    pub after: Option<u64>,
}

struct Subscription {
    app: Arc<AppState>,
    rx: broadcast::Receiver<StreamRecord>,
    closing: watch::Receiver<bool>,
    backlog: VecDeque<StreamRecord>,
    last: u64,
    done: bool,
}

fn sse_event(record: &StreamRecord) -> Event {
    Event::default()
        .id(record.id.to_string())
        .event("log")
        .data(serde_json::to_string(record).expect("records serialize"))
}

async fn next_record(mut sub: Subscription) -> Option<(Result<Event, Infallible>, Subscription)> {
    loop {
        if let Some(record) = sub.backlog.pop_front() {
            if record.id <= sub.last {
                continue;
            }
            sub.last = record.id;
            return Some((Ok(sse_event(&record)), sub));
        }
        if sub.done {
            return None;
        }
        if *sub.closing.borrow_and_update() {
            // take whatever was published before the close, then stop
            sub.done = true;
            while let Ok(r) = sub.rx.try_recv() {
                sub.backlog.push_back(r);
            }
            if sub.backlog.is_empty() {
                let missed = sub.app.lock().after(sub.last);
                sub.backlog.extend(missed);
            }
            continue;
        }
        tokio::select! {
            biased;
            r = sub.rx.recv() => match r {
                Ok(record) => sub.backlog.push_back(record),
                Err(broadcast::error::RecvError::Lagged(_)) => {
                    let missed = sub.app.lock().after(sub.last);
                    sub.backlog.extend(missed);
                }
                Err(broadcast::error::RecvError::Closed) => sub.done = true,
            },
            changed = sub.closing.changed() => {
                if changed.is_err() {
                    sub.done = true;
                }
            }
        }
    }
}

async fn events(
    State(app): State<Arc<AppState>>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let after = q
        .after
        .or_else(|| {
            headers
                .get("last-event-id")
                .and_then(|v| v.to_str().ok())
                .and_then(|s| s.trim().parse().ok())
        })
        .unwrap_or(0);
    // subscribe under the lock so nothing falls between backlog and live feed
    let (backlog, rx) = {
        let inner = app.lock();
        (inner.after(after), app.tx.subscribe())
    };
    let sub = Subscription {
        closing: app.closing.subscribe(),
        app,
        rx,
        backlog: backlog.into(),
        last: after,
        done: false,
    };
    Sse::new(futures::stream::unfold(sub, next_record)).keep_alive(KeepAlive::default())
}

/// Serves until `shutdown` resolves, then closes the live session and ends
/// every event stream before returning.
pub async fn serve(
    listener: TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let app = router(state.clone());
    axum::serve(listener, app)
        .with_graceful_shutdown(async move {
            shutdown.await;
            state.shutdown();
        })
        .await
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}

/// Entry point for `situ serve`.
pub fn run_blocking(args: &ServeArgs) -> Result<(), CliError> {
    if bundled::scenario(&args.scenario).is_none() {
        return Err(CliError::config(format!("no bundled scenario '{}'", args.scenario)));
    }
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| CliError::config(format!("bad listen address: {e}")))?;
    let defaults = SessionDefaults {
        scenario: args.scenario.clone(),
        variant: args.variant.into(),
        seed: args.seed,
        script: args.script,
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::config(e.to_string()))?;
    rt.block_on(async move {
        let listener = TcpListener::bind(addr).await.map_err(|e| {
            let code = if e.kind() == std::io::ErrorKind::AddrInUse {
                EXIT_PORT_IN_USE
            } else {
                crate::EXIT_CONFIG
            };
            CliError {
                code,
                message: format!("cannot listen on {addr}: {e}"),
            }
        })?;
        println!("listening on http://{}", listener.local_addr().unwrap_or(addr));
        serve(listener, AppState::new(defaults), shutdown_signal())
            .await
            .map_err(|e| CliError::config(e.to_string()))
    })
}
