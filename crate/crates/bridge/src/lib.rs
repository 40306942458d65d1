//! HTTP and WebSocket front end for live teleoperation sessions.
//!
//! Each session runs on its own task. Network handlers reach it only through
//! a mailbox; snapshots leave through a broadcast channel, so a slow client
//! drops frames instead of delaying the control timeline.
//!
//! Routes:
//!
//! - `GET /health`
//! - `GET /scenarios`
//! - `POST /session` with `{"scenario_name", "controller": "base" | "new"}`
//! - `GET /session/{id}` and `DELETE /session/{id}`
//! - `GET /session/{id}/log`: the event log for replay
//! - `GET /session/{id}/ws`: scene frame, then one snapshot per tick

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use foresight::controller::ControllerMode;
use foresight::geometry::Vec3;
use foresight::simlab::{Scenario, BUNDLED_SCENARIOS};
use foresight::teleop::{Ack, ClientMessage, Session, SessionEvent, TeleopError};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::time::Instant;

pub const LISTEN_ENV: &str = "FORESIGHT_LISTEN";
pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";

/// Snapshots buffered per client before the oldest are dropped.
const CLIENT_BUFFER: usize = 64;

/// The flag wins over the environment, which wins over the default.
pub fn listen_address(flag: Option<&str>) -> String {
    flag.map(str::to_string)
        .or_else(|| std::env::var(LISTEN_ENV).ok().filter(|s| !s.is_empty()))
        .unwrap_or_else(|| DEFAULT_LISTEN.to_string())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionRequest {
    pub scenario_name: String,
    #[serde(default = "default_controller")]
    pub controller: String,
}

fn default_controller() -> String {
    "new".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: u64,
    pub scenario: String,
    pub controller: String,
    pub ts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub session_id: u64,
    pub scenario: String,
    pub controller: String,
    pub tick: u64,
    pub clients: usize,
    pub overruns: u64,
    pub worst_overrun_ms: f64,
}

enum Request {
    Command { x_dot: Vec3, seq: u64, reply: oneshot::Sender<Result<Ack, TeleopError>> },
    Status(oneshot::Sender<SessionStatus>),
    Log(oneshot::Sender<Vec<SessionEvent>>),
    Close,
}

struct Handle {
    mailbox: mpsc::UnboundedSender<Request>,
    /// Weak so that the channel closes when the timeline ends.
    snapshots: broadcast::WeakSender<Arc<str>>,
    scene: Arc<str>,
    clients: Arc<AtomicUsize>,
}

struct Inner {
    scenarios: Vec<Scenario>,
    sessions: Mutex<HashMap<u64, Arc<Handle>>>,
    next_id: AtomicU64,
}

#[derive(Clone)]
pub struct Bridge {
    inner: Arc<Inner>,
}

impl Bridge {
    pub fn new(scenarios: Vec<Scenario>) -> Self {
        Self { inner: Arc::new(Inner { scenarios, sessions: Mutex::new(HashMap::new()), next_id: AtomicU64::new(1) }) }
    }

    /// A bridge offering the scenarios shipped with the core crate.
    pub fn bundled() -> Self {
        let scenarios =
            BUNDLED_SCENARIOS.iter().map(|(name, json)| Scenario::from_json(json, name).expect("bundled scenarios are valid")).collect();
        Self::new(scenarios)
    }

    pub fn scenario_names(&self) -> Vec<String> {
        self.inner.scenarios.iter().map(|s| s.name.clone()).collect()
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/health", get(health))
            .route("/scenarios", get(scenarios))
            .route("/session", axum::routing::post(create_session))
            .route("/session/{id}", get(session_status).delete(close_session))
            .route("/session/{id}/log", get(session_log))
            .route("/session/{id}/ws", get(session_socket))
            .with_state(self.clone())
    }

    /// Starts a session and its control timeline. Must be called inside a Tokio runtime.
    pub fn start_session(&self, scenario_name: &str, controller: &str) -> Result<SessionInfo, ApiError> {
        let mode = ControllerMode::parse(controller)
            .ok_or_else(|| ApiError::bad_request(format!("controller must be 'base' or 'new', got '{controller}'")))?;
        let scenario = self
            .inner
            .scenarios
            .iter()
            .find(|s| s.name == scenario_name)
            .ok_or_else(|| ApiError::not_found(format!("unknown scenario '{scenario_name}'")))?;
        let session = Session::start(scenario, mode).map_err(|e| ApiError::bad_request(e.to_string()))?;
        let id = self.inner.next_id.fetch_add(1, Ordering::Relaxed);
        let info = SessionInfo { session_id: id, scenario: scenario.name.clone(), controller: mode.as_str().into(), ts: session.ts() };
        let scene: Arc<str> = serde_json::to_string(&session.scene()).expect("scene serializes").into();
        let (mailbox, rx) = mpsc::unbounded_channel();
        let (snapshots, _) = broadcast::channel(CLIENT_BUFFER);
        let handle = Arc::new(Handle { mailbox, snapshots: snapshots.downgrade(), scene, clients: Arc::new(AtomicUsize::new(0)) });
        tokio::spawn(timeline(session, id, rx, snapshots, handle.clients.clone()));
        self.inner.sessions.lock().expect("session table").insert(id, handle);
        Ok(info)
    }

    fn handle(&self, id: u64) -> Result<Arc<Handle>, ApiError> {
        self.inner.sessions.lock().expect("session table").get(&id).cloned().ok_or_else(|| ApiError::not_found(format!("no session {id}")))
    }

    pub fn session_count(&self) -> usize {
        self.inner.sessions.lock().expect("session table").len()
    }
}

/// The control timeline of one session: commands are applied as they arrive,
/// ticks run every `Ts`. A late tick still runs; ticks are never skipped.
async fn timeline(
    mut session: Session,
    id: u64,
    mut rx: mpsc::UnboundedReceiver<Request>,
    snapshots: broadcast::Sender<Arc<str>>,
    clients: Arc<AtomicUsize>,
) {
    let start = Instant::now();
    let period = Duration::from_secs_f64(session.ts());
    let mut due = start;
    loop {
        tokio::select! {
            biased;
            req = rx.recv() => match req {
                None | Some(Request::Close) => break,
                Some(Request::Command { x_dot, seq, reply }) => {
                    let _ = reply.send(session.submit_command(x_dot, seq, start.elapsed().as_secs_f64()));
                }
                Some(Request::Status(reply)) => {
                    let o = session.overruns();
                    let _ = reply.send(SessionStatus {
                        session_id: id,
                        scenario: session.scenario().name.clone(),
                        controller: session.mode().as_str().into(),
                        tick: session.tick_count(),
                        clients: clients.load(Ordering::Relaxed),
                        overruns: o.count,
                        worst_overrun_ms: o.worst * 1e3,
                    });
                }
                Some(Request::Log(reply)) => {
                    let _ = reply.send(session.log().to_vec());
                }
            },
            _ = tokio::time::sleep_until(due) => {
                let snap = match session.tick(start.elapsed().as_secs_f64()) {
                    Ok(s) => s,
                    Err(_) => break,
                };
                let deadline = due + period;
                let finished = Instant::now();
                if finished > deadline {
                    session.record_overrun((finished - deadline).as_secs_f64());
                }
                let text = serde_json::to_string(&snap).expect("snapshot serializes");
                // No receivers is fine: the session runs with or without clients.
                let _ = snapshots.send(text.into());
                due = deadline;
            }
        }
    }
    session.close();
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn bad_request(message: String) -> Self {
        Self { status: StatusCode::BAD_REQUEST, message }
    }

    fn not_found(message: String) -> Self {
        Self { status: StatusCode::NOT_FOUND, message }
    }

    fn gone(id: u64) -> Self {
        Self { status: StatusCode::GONE, message: format!("session {id} is closed") }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

async fn health(State(bridge): State<Bridge>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "sessions": bridge.session_count() }))
}

async fn scenarios(State(bridge): State<Bridge>) -> Json<Vec<String>> {
    Json(bridge.scenario_names())
}

async fn create_session(State(bridge): State<Bridge>, body: Result<Json<SessionRequest>, axum::extract::rejection::JsonRejection>) -> Response {
    let Json(req) = match body {
        Ok(b) => b,
        Err(e) => return ApiError::bad_request(e.body_text()).into_response(),
    };
    match bridge.start_session(&req.scenario_name, &req.controller) {
        Ok(info) => (StatusCode::CREATED, Json(info)).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn ask<T>(bridge: &Bridge, id: u64, make: impl FnOnce(oneshot::Sender<T>) -> Request) -> Result<T, ApiError> {
    let handle = bridge.handle(id)?;
    let (tx, rx) = oneshot::channel();
    handle.mailbox.send(make(tx)).map_err(|_| ApiError::gone(id))?;
    rx.await.map_err(|_| ApiError::gone(id))
}

async fn session_status(State(bridge): State<Bridge>, Path(id): Path<u64>) -> Result<Json<SessionStatus>, ApiError> {
    ask(&bridge, id, Request::Status).await.map(Json)
}

async fn session_log(State(bridge): State<Bridge>, Path(id): Path<u64>) -> Result<Json<Vec<SessionEvent>>, ApiError> {
    ask(&bridge, id, Request::Log).await.map(Json)
}

async fn close_session(State(bridge): State<Bridge>, Path(id): Path<u64>) -> Result<StatusCode, ApiError> {
    let handle = bridge.inner.sessions.lock().expect("session table").remove(&id).ok_or_else(|| ApiError::not_found(format!("no session {id}")))?;
    let _ = handle.mailbox.send(Request::Close);
    Ok(StatusCode::NO_CONTENT)
}

async fn session_socket(State(bridge): State<Bridge>, Path(id): Path<u64>, ws: WebSocketUpgrade) -> Result<Response, ApiError> {
    let handle = bridge.handle(id)?;
    Ok(ws.on_upgrade(move |socket| client(socket, handle)))
}

fn error_frame(message: impl std::fmt::Display) -> Message {
    Message::Text(json!({ "type": "error", "message": message.to_string() }).to_string().into())
}

async fn client(mut socket: WebSocket, handle: Arc<Handle>) {
    let Some(mut snapshots) = handle.snapshots.upgrade().map(|s| s.subscribe()) else {
        let _ = socket.send(error_frame("session closed")).await;
        return;
    };
    handle.clients.fetch_add(1, Ordering::Relaxed);
    if socket.send(Message::Text(handle.scene.to_string().into())).await.is_ok() {
        serve_client(&mut socket, &handle, &mut snapshots).await;
    }
    handle.clients.fetch_sub(1, Ordering::Relaxed);
}

async fn serve_client(socket: &mut WebSocket, handle: &Handle, snapshots: &mut broadcast::Receiver<Arc<str>>) {
    loop {
        tokio::select! {
            snap = snapshots.recv() => match snap {
                Ok(text) => {
                    if socket.send(Message::Text(text.to_string().into())).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => {
                    let _ = socket.send(error_frame("session closed")).await;
                    return;
                }
            },
            msg = socket.recv() => {
                let text = match msg {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                    Some(Ok(_)) => continue,
                };
                let reply = match serde_json::from_str::<ClientMessage>(text.as_str()) {
                    Ok(ClientMessage::Command { seq, vx, vy, vz }) => {
                        let (tx, rx) = oneshot::channel();
                        let req = Request::Command { x_dot: Vec3::new(vx, vy, vz), seq, reply: tx };
                        if handle.mailbox.send(req).is_err() {
                            let _ = socket.send(error_frame("session closed")).await;
                            return;
                        }
                        match rx.await {
                            Ok(Ok(ack)) => Message::Text(serde_json::to_string(&ack).expect("ack serializes").into()),
                            Ok(Err(e)) => error_frame(e),
                            Err(_) => error_frame("session closed"),
                        }
                    }
                    Err(e) => error_frame(format!("bad frame: {e}")),
                };
                if socket.send(reply).await.is_err() {
                    return;
                }
            }
        }
    }
}

/// Serves `bridge` on `listener` until the task is dropped.
pub async fn serve(listener: tokio::net::TcpListener, bridge: Bridge) -> std::io::Result<()> {
    axum::serve(listener, bridge.router()).await
}
