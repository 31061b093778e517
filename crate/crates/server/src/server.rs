//! Live session service: one actor task owns the [`Runtime`]; WebSocket
//! connections and HTTP handlers talk to it over a single intake channel, so
//! every mutation is applied in one total order.

use std::collections::{BTreeMap, VecDeque};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use duplexcap_asr::{AsrMapper, ExternalAsrMessage};
use duplexcap_core::{
    CaptionConfig, ConfigPatch, Face, Millis, Session, SessionId, TranscriptEvent,
};
use futures_util::{SinkExt, StreamExt};
use serde::Serialize;
use serde_json::{json, Value};
use tokio::sync::{mpsc, oneshot};
use tokio::time::Instant;

use crate::control::{CommandError, ControlCommand};
use crate::log::LogWriter;
use crate::registry::{ClientId, ClientRegistration, Registry};
use crate::runtime::{Broadcast, Runtime};
use crate::wire::{
    ByePayload, ConfigPayload, ErrorCode, ErrorPayload, FramePayload, HelloPayload, MessageType,
    Role, WelcomePayload, WireMessage,
};

const INTAKE_CAPACITY: usize = 1024;
const CLIENT_OUTBOX: usize = 1024;
const HELLO_TIMEOUT: Duration = Duration::from_secs(5);
const LATENCY_SAMPLES: usize = 100_000;

#[derive(Debug, Clone)]
pub struct ServerOptions {
    pub session_id: SessionId,
    pub config: CaptionConfig,
    /// Directory for `session-<id>.jsonl`; no log is written when absent.
    pub log_dir: Option<PathBuf>,
}

impl Default for ServerOptions {
    fn default() -> Self {
        Self { session_id: "default".into(), config: CaptionConfig::default(), log_dir: None }
    }
}

enum Intake {
    Register { client_id: ClientId, role: Role, tx: mpsc::Sender<String> },
    Disconnect { client_id: ClientId },
    Control { client_id: ClientId, msg_id: u64, payload: Value },
    Reject { client_id: ClientId, msg_id: u64, error: ErrorPayload },
    Event { event: TranscriptEvent, enqueued: Instant },
    Asr { msg: ExternalAsrMessage, enqueued: Instant },
    GetConfig { reply: oneshot::Sender<ConfigPayload> },
    PutConfig { patch: ConfigPatch, reply: oneshot::Sender<Result<ConfigPayload, CommandError>> },
    Inspect { reply: oneshot::Sender<Session> },
}

/// Cheap-to-clone handle to a running session actor.
#[derive(Clone)]
pub struct SessionHandle {
    intake: mpsc::Sender<Intake>,
    session_id: SessionId,
    log_path: Option<PathBuf>,
    next_client: Arc<AtomicU64>,
    latencies: Arc<Mutex<VecDeque<Duration>>>,
}

impl SessionHandle {
    /// Starts the session actor on the current tokio runtime.
    pub fn spawn(options: ServerOptions) -> anyhow::Result<Self> {
        let log = match &options.log_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                Some(LogWriter::create(dir.join(format!("session-{}.jsonl", options.session_id)))?)
            }
            None => None,
        };
        let (intake, rx) = mpsc::channel(INTAKE_CAPACITY);
        let handle = Self {
            intake,
            session_id: options.session_id.clone(),
            log_path: log.as_ref().map(|l| l.path().to_owned()),
            next_client: Arc::new(AtomicU64::new(1)),
            latencies: Arc::new(Mutex::new(VecDeque::new())),
        };
        let start = Instant::now();
        let actor = Actor {
            start,
            runtime: Runtime::new(options.session_id.clone(), &options.config, 0),
            mapper: AsrMapper::new(options.session_id),
            registry: Registry::new(),
            clients: BTreeMap::new(),
            log,
            awaiting_broadcast: Vec::new(),
            latencies: handle.latencies.clone(),
        };
        tokio::spawn(actor.run(rx));
        Ok(handle)
    }

    pub fn session_id(&self) -> &SessionId {
        &self.session_id
    }

    pub fn log_path(&self) -> Option<&PathBuf> {
        self.log_path.as_ref()
    }

    async fn send(&self, intake: Intake) {
        // the actor only stops when every handle is gone
        let _ = self.intake.send(intake).await;
    }

    /// Feeds a transcript event; `recv_ts` is restamped at intake.
    pub async fn submit_event(&self, event: TranscriptEvent) {
        self.send(Intake::Event { event, enqueued: Instant::now() }).await;
    }

    pub async fn submit_asr(&self, msg: ExternalAsrMessage) {
        self.send(Intake::Asr { msg, enqueued: Instant::now() }).await;
    }

    pub async fn config(&self) -> ConfigPayload {
        let (reply, rx) = oneshot::channel();
        self.send(Intake::GetConfig { reply }).await;
        rx.await.expect("session actor alive")
    }

    pub async fn patch_config(&self, patch: ConfigPatch) -> Result<ConfigPayload, CommandError> {
        let (reply, rx) = oneshot::channel();
        self.send(Intake::PutConfig { patch, reply }).await;
        rx.await.expect("session actor alive")
    }

    /// Copy of the current session state.
    pub async fn session(&self) -> Session {
        let (reply, rx) = oneshot::channel();
        self.send(Intake::Inspect { reply }).await;
        rx.await.expect("session actor alive")
    }

    /// Intake-to-broadcast processing times of state-changing events, most
    /// recent last.
    pub fn latency_samples(&self) -> Vec<Duration> {
        self.latencies.lock().unwrap().iter().copied().collect()
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/ws", get(ws_upgrade))
            .route("/config", get(get_config).put(put_config))
            .route("/healthz", get(healthz))
            .route("/session/log", get(session_log))
            .route("/asr", post(post_asr))
            .with_state(self.clone())
    }
}

struct Client {
    reg: ClientRegistration,
    tx: mpsc::Sender<String>,
    next_msg_id: u64,
}

struct Actor {
    start: Instant,
    runtime: Runtime,
    mapper: AsrMapper,
    registry: Registry,
    clients: BTreeMap<ClientId, Client>,
    log: Option<LogWriter>,
    awaiting_broadcast: Vec<Instant>,
    latencies: Arc<Mutex<VecDeque<Duration>>>,
}

impl Actor {
    fn now(&self) -> Millis {
        self.start.elapsed().as_millis() as Millis
    }

    async fn run(mut self, mut rx: mpsc::Receiver<Intake>) {
        loop {
            let wake = self
                .runtime
                .deadline()
                .map(|d| self.start + Duration::from_millis(d.max(0) as u64));
            tokio::select! {
                msg = rx.recv() => match msg {
                    Some(msg) => {
                        self.handle(msg);
                        while let Ok(msg) = rx.try_recv() {
                            self.handle(msg);
                        }
                    }
                    None => break,
                },
                _ = sleep_until_opt(wake), if wake.is_some() => {}
            }
            self.persist();
            let now = self.now();
            if self.runtime.due(now) {
                let b = self.runtime.broadcast(now);
                self.persist();
                self.fan_out(&b);
                self.record_latencies();
            }
        }
        self.persist();
    }

    fn persist(&mut self) {
        let records = self.runtime.take_log();
        let Some(log) = self.log.as_mut() else { return };
        if records.is_empty() {
            return;
        }
        for r in &records {
            if let Err(e) = log.append(r) {
                tracing::error!("session log append failed: {e}");
            }
        }
        if let Err(e) = log.flush() {
            tracing::error!("session log flush failed: {e}");
        }
    }

    fn record_latencies(&mut self) {
        if self.awaiting_broadcast.is_empty() {
            return;
        }
        let mut samples = self.latencies.lock().unwrap();
        for t in self.awaiting_broadcast.drain(..) {
            if samples.len() == LATENCY_SAMPLES {
                samples.pop_front();
            }
            samples.push_back(t.elapsed());
        }
    }

    /// Queues a message for one client; a full or closed outbox drops the
    /// client.
    fn send_to(&mut self, id: ClientId, kind: MessageType, payload: impl Serialize, reply_to: Option<u64>) {
        let Some(client) = self.clients.get_mut(&id) else { return };
        let msg_id = reply_to.unwrap_or_else(|| {
            let n = client.next_msg_id;
            client.next_msg_id += 1;
            n
        });
        let text = WireMessage::new(kind, payload, msg_id).to_text();
        if let Err(e) = client.tx.try_send(text) {
            tracing::warn!(client = %id, "dropping client: {e}");
            self.drop_client(id);
        }
    }

    fn drop_client(&mut self, id: ClientId) {
        self.registry.unregister(id);
        self.clients.remove(&id);
    }

    fn fan_out(&mut self, b: &Broadcast) {
        for (face, frame) in [(Face::Dhh, &b.dhh), (Face::Hearing, &b.hearing)] {
            if let Some(id) = self.registry.face_client(face) {
                self.send_to(id, MessageType::Frame, FramePayload::from(frame), None);
            }
        }
    }

    fn config_payload(&self) -> ConfigPayload {
        let s = self.runtime.session();
        ConfigPayload { config_rev: s.config_rev(), config: s.config().clone() }
    }

    fn push_config_to_all(&mut self) {
        let payload = self.config_payload();
        let ids: Vec<ClientId> = self.registry.ids().collect();
        for id in ids {
            self.send_to(id, MessageType::Config, &payload, None);
        }
    }

    fn handle(&mut self, msg: Intake) {
        let now = self.now();
        match msg {
            Intake::Register { client_id, role, tx } => {
                let reg = ClientRegistration { client_id, role, connected_at: now };
                if let Some(old) = self.registry.register(reg.clone()) {
                    let bye = ByePayload { reason: "displaced".into() };
                    self.send_to(old.client_id, MessageType::Bye, bye, None);
                    self.clients.remove(&old.client_id);
                    tracing::info!(old = %old.client_id, new = %client_id, "face client displaced");
                }
                self.clients.insert(client_id, Client { reg, tx, next_msg_id: 1 });
                let welcome = WelcomePayload {
                    client_id: client_id.0,
                    role,
                    session_id: self.runtime.session().session_id().to_string(),
                };
                self.send_to(client_id, MessageType::Hello, welcome, None);
                let config = self.config_payload();
                self.send_to(client_id, MessageType::Config, config, None);
                if let Some(face) = role.face() {
                    let frame = self.runtime.snapshot(face, now);
                    self.send_to(client_id, MessageType::Frame, FramePayload::from(&frame), None);
                }
            }
            Intake::Disconnect { client_id } => self.drop_client(client_id),
            Intake::Reject { client_id, msg_id, error } => {
                self.send_to(client_id, MessageType::Error, error, Some(msg_id));
            }
            Intake::Control { client_id, msg_id, payload } => {
                let Some(role) = self.clients.get(&client_id).map(|c| c.reg.role) else { return };
                match self.control(role, &payload, now) {
                    Ok(ack) => {
                        self.send_to(client_id, MessageType::Ack, ack, Some(msg_id));
                    }
                    Err(e) => {
                        self.send_to(client_id, MessageType::Error, e.to_payload(), Some(msg_id));
                    }
                }
            }
            Intake::Event { mut event, enqueued } => {
                event.recv_ts = now;
                self.ingest(event, enqueued, now);
            }
            Intake::Asr { msg, enqueued } => {
                if let Some(event) = self.mapper.map(&msg, now) {
                    self.ingest(event, enqueued, now);
                }
            }
            Intake::GetConfig { reply } => {
                let _ = reply.send(self.config_payload());
            }
            Intake::PutConfig { patch, reply } => {
                let result = self
                    .runtime
                    .command(&ControlCommand::ConfigPatch(patch), now)
                    .map(|_| self.config_payload());
                if result.is_ok() {
                    self.push_config_to_all();
                }
                let _ = reply.send(result);
            }
            Intake::Inspect { reply } => {
                let _ = reply.send(self.runtime.session().clone());
            }
        }
    }

    fn ingest(&mut self, event: TranscriptEvent, enqueued: Instant, now: Millis) {
        if let Ok(delta) = self.runtime.ingest(&event, now) {
            if delta.changed {
                self.awaiting_broadcast.push(enqueued);
            }
        }
    }

    fn control(&mut self, role: Role, payload: &Value, now: Millis) -> Result<Value, CommandError> {
        let cmd = ControlCommand::from_payload(payload).map_err(CommandError::BadMessage)?;
        if !cmd.permitted_for(role) {
            return Err(CommandError::Forbidden(role, cmd.action()));
        }
        let ack = self.runtime.command(&cmd, now)?;
        if matches!(cmd, ControlCommand::ConfigPatch(_)) {
            self.push_config_to_all();
        }
        let mut body = json!({
            "action": cmd.action(),
            "changed": ack.delta.changed,
            "config_rev": ack.config_rev,
        });
        if let Some(id) = ack.utterance_id {
            body["utterance_id"] = json!(id);
        }
        Ok(body)
    }
}

async fn sleep_until_opt(at: Option<Instant>) {
    if let Some(at) = at {
        tokio::time::sleep_until(at).await;
    }
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(handle): State<SessionHandle>) -> Response {
    ws.on_upgrade(move |socket| connection(socket, handle))
}

fn bad_hello(msg_id: u64, message: impl Into<String>) -> String {
    WireMessage::new(MessageType::Error, ErrorPayload::new(ErrorCode::BadHello, message), msg_id).to_text()
}

/// Validates the first message of a connection.
fn parse_hello(text: &str, session_id: &SessionId) -> Result<(Role, u64), String> {
    let msg: WireMessage = serde_json::from_str(text).map_err(|_| bad_hello(0, "first message must be a hello"))?;
    if msg.kind != MessageType::Hello {
        return Err(bad_hello(msg.msg_id, "first message must be a hello"));
    }
    let hello: HelloPayload =
        serde_json::from_value(msg.payload).map_err(|e| bad_hello(msg.msg_id, e.to_string()))?;
    let role = Role::parse(&hello.role)
        .ok_or_else(|| bad_hello(msg.msg_id, format!("unknown role {:?}", hello.role)))?;
    if hello.session_id != session_id.as_str() {
        return Err(bad_hello(msg.msg_id, format!("unknown session {:?}", hello.session_id)));
    }
    Ok((role, msg.msg_id))
}

async fn connection(socket: WebSocket, handle: SessionHandle) {
    let (mut sink, mut stream) = socket.split();

    let first = match tokio::time::timeout(HELLO_TIMEOUT, stream.next()).await {
        Ok(Some(Ok(Message::Text(text)))) => parse_hello(text.as_str(), &handle.session_id),
        _ => Err(bad_hello(0, "expected a hello message")),
    };
    let role = match first {
        Ok((role, _)) => role,
        Err(error) => {
            let _ = sink.send(Message::Text(error.into())).await;
            let _ = sink.send(Message::Close(None)).await;
            return;
        }
    };

    let client_id = ClientId(handle.next_client.fetch_add(1, Ordering::Relaxed));
    let (tx, mut rx) = mpsc::channel::<String>(CLIENT_OUTBOX);
    handle.send(Intake::Register { client_id, role, tx }).await;

    let writer = tokio::spawn(async move {
        while let Some(text) = rx.recv().await {
            if sink.send(Message::Text(text.into())).await.is_err() {
                return;
            }
        }
        // outbox closed by the actor: displaced or dropped
        let _ = sink.send(Message::Close(None)).await;
    });

    while let Some(Ok(msg)) = stream.next().await {
        let text = match msg {
            Message::Text(t) => t,
            Message::Close(_) => break,
            _ => continue,
        };
        let intake = match serde_json::from_str::<WireMessage>(text.as_str()) {
            Ok(m) if m.kind == MessageType::Control => {
                Intake::Control { client_id, msg_id: m.msg_id, payload: m.payload }
            }
            Ok(m) => Intake::Reject {
                client_id,
                msg_id: m.msg_id,
                error: ErrorPayload::new(ErrorCode::BadMessage, format!("unexpected {:?} message", m.kind)),
            },
            Err(e) => Intake::Reject {
                client_id,
                msg_id: 0,
                error: ErrorPayload::new(ErrorCode::BadMessage, e.to_string()),
            },
        };
        handle.send(intake).await;
    }
    handle.send(Intake::Disconnect { client_id }).await;
    let _ = writer.await;
}

async fn get_config(State(handle): State<SessionHandle>) -> Response {
    config_response(handle.config().await)
}

fn config_response(payload: ConfigPayload) -> Response {
    let mut resp = Json(payload.config).into_response();
    resp.headers_mut().insert("x-config-rev", HeaderValue::from(payload.config_rev));
    resp
}

async fn put_config(State(handle): State<SessionHandle>, Json(body): Json<Value>) -> Response {
    let patch = match ConfigPatch::from_value(body) {
        Ok(p) => p,
        Err(e) => return error_response(StatusCode::UNPROCESSABLE_ENTITY, CommandError::from(e).to_payload()),
    };
    match handle.patch_config(patch).await {
        Ok(payload) => config_response(payload),
        Err(e) => error_response(StatusCode::UNPROCESSABLE_ENTITY, e.to_payload()),
    }
}

fn error_response(status: StatusCode, payload: ErrorPayload) -> Response {
    (status, Json(payload)).into_response()
}

async fn healthz(State(handle): State<SessionHandle>) -> Json<Value> {
    Json(json!({ "status": "ok", "session_id": handle.session_id }))
}

async fn session_log(State(handle): State<SessionHandle>) -> Response {
    let Some(path) = handle.log_path.clone() else {
        return (StatusCode::NOT_FOUND, "session log disabled").into_response();
    };
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, "application/x-ndjson")], bytes).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

async fn post_asr(State(handle): State<SessionHandle>, Json(msg): Json<ExternalAsrMessage>) -> StatusCode {
    handle.submit_asr(msg).await;
    StatusCode::ACCEPTED
}

/// Serves the session's routes until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    handle: SessionHandle,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, handle.router()).with_graceful_shutdown(shutdown).await
}
