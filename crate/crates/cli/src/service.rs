//! HTTP session API over one interactive registration session.
//!
//! The session lives on a worker thread that drains a FIFO command queue.
//! Handlers only read published snapshots or enqueue commands.

use std::convert::Infallible;
use std::path::{Component, Path, PathBuf};
use std::sync::{mpsc, Arc, RwLock};
use std::thread;

use axum::body::Body;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use partreg_core::io::{ply_string, RunReport, ScenarioBundle, SCHEMA_VERSION};
use partreg_core::pipeline::{Command, PipelineConfig, Session, SessionState};
use partreg_core::runner;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::{broadcast, oneshot};

const PLY_CONTENT_TYPE: &str = "application/x-ply";

#[derive(Debug, Clone, Serialize)]
pub struct SessionDocument {
    pub schema_version: u32,
    #[serde(flatten)]
    pub state: SessionState,
}

/// A message on the server-push channel.
#[derive(Debug, Clone)]
pub struct PushMessage {
    pub name: String,
    pub data: String,
}

struct Snapshot {
    state: SessionState,
    current_ply: Arc<String>,
    report: Option<Arc<RunReport>>,
    report_error: Option<String>,
}

struct Job {
    command: Command,
    reply: oneshot::Sender<Result<SessionState, String>>,
}

#[derive(Clone)]
pub struct AppState {
    snapshot: Arc<RwLock<Snapshot>>,
    queue: mpsc::Sender<Job>,
    push: broadcast::Sender<PushMessage>,
    source_ply: Arc<String>,
    target_ply: Arc<String>,
    ui_dir: Option<Arc<PathBuf>>,
}

impl AppState {
    pub fn subscribe(&self) -> broadcast::Receiver<PushMessage> {
        self.push.subscribe()
    }

    pub fn state(&self) -> SessionState {
        self.snapshot.read().expect("snapshot lock").state.clone()
    }

    /// Enqueues a command and waits for the worker's answer.
    pub async fn command(&self, command: Command) -> Result<SessionState, String> {
        let (reply, answer) = oneshot::channel();
        self.queue
            .send(Job { command, reply })
            .map_err(|_| "session worker has stopped".to_string())?;
        answer.await.map_err(|_| "session worker has stopped".to_string())?
    }
}

pub struct ServiceOptions {
    pub tolerance: Option<f64>,
    pub ui_dir: Option<PathBuf>,
}

/// Validates the session inputs and starts the worker thread.
pub fn spawn_session(bundle: ScenarioBundle, cfg: PipelineConfig, options: ServiceOptions) -> partreg_core::Result<AppState> {
    let session = Session::new(
        bundle.name.clone(),
        bundle.source.clone(),
        bundle.graph.clone(),
        bundle.target.clone(),
        bundle.truth.clone(),
        cfg,
    )?;
    let snapshot = Arc::new(RwLock::new(Snapshot {
        state: session.state(),
        current_ply: Arc::new(ply_string(&session.current_cloud())),
        report: None,
        report_error: None,
    }));
    let (queue, jobs) = mpsc::channel::<Job>();
    let (push, _) = broadcast::channel(1024);
    let app = AppState {
        snapshot: snapshot.clone(),
        queue,
        push: push.clone(),
        source_ply: Arc::new(ply_string(&bundle.source)),
        target_ply: Arc::new(ply_string(&bundle.target)),
        ui_dir: options.ui_dir.map(Arc::new),
    };
    let tolerance = options.tolerance;
    thread::Builder::new()
        .name("partreg-session".into())
        .spawn(move || worker(session, bundle, tolerance, jobs, snapshot, push))
        .map_err(partreg_core::Error::from)?;
    Ok(app)
}

fn worker(
    mut session: Session,
    bundle: ScenarioBundle,
    tolerance: Option<f64>,
    jobs: mpsc::Receiver<Job>,
    snapshot: Arc<RwLock<Snapshot>>,
    push: broadcast::Sender<PushMessage>,
) {
    let mut published = 0;
    for job in jobs {
        let outcome = session.command(job.command);
        let state = session.state();
        let mut snap = Snapshot {
            state: state.clone(),
            current_ply: Arc::new(ply_string(&session.current_cloud())),
            report: None,
            report_error: None,
        };
        if let Ok(result) = session.result() {
            match runner::artifacts(&bundle, session.config(), result, tolerance) {
                Ok(a) => snap.report = Some(Arc::new(a.report)),
                Err(e) => snap.report_error = Some(e.to_string()),
            }
        }
        *snapshot.write().expect("snapshot lock") = snap;
        for event in &session.log()[published..] {
            let name = serde_json::to_value(event.kind)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_else(|| "event".into());
            let _ = push.send(PushMessage {
                name,
                data: serde_json::to_string(event).expect("events serialize"),
            });
        }
        published = session.log().len();
        let _ = push.send(PushMessage {
            name: "state".into(),
            data: serde_json::to_string(&SessionDocument {
                schema_version: SCHEMA_VERSION,
                state: state.clone(),
            })
            .expect("state serializes"),
        });
        let _ = job.reply.send(outcome.map(|()| state).map_err(|e| e.to_string()));
    }
}

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/api/session", get(get_session))
        .route("/api/session/command", post(post_command))
        .route("/api/clouds/{which}", get(get_cloud))
        .route("/api/report", get(get_report))
        .route("/api/events", get(events))
        .fallback(static_asset)
        .with_state(app)
}

fn error(status: StatusCode, message: impl Into<String>, state: Option<SessionState>) -> Response {
    let mut body = json!({ "schema_version": SCHEMA_VERSION, "error": message.into() });
    if let Some(s) = state {
        body["state"] = serde_json::to_value(s).expect("state serializes");
    }
    (status, Json(body)).into_response()
}

async fn get_session(State(app): State<AppState>) -> Json<SessionDocument> {
    Json(SessionDocument {
        schema_version: SCHEMA_VERSION,
        state: app.state(),
    })
}

#[derive(Debug, Deserialize)]
struct CommandBody {
    command: String,
}

async fn post_command(State(app): State<AppState>, body: Option<Json<CommandBody>>) -> Response {
    let Some(Json(body)) = body else {
        return error(StatusCode::BAD_REQUEST, "expected a JSON body {\"command\": ...}", None);
    };
    let command: Command = match body.command.parse() {
        Ok(c) => c,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("{e}"), None),
    };
    match app.command(command).await {
        Ok(state) => Json(SessionDocument {
            schema_version: SCHEMA_VERSION,
            state,
        })
        .into_response(),
        Err(message) => error(StatusCode::CONFLICT, message, Some(app.state())),
    }
}

async fn get_cloud(State(app): State<AppState>, UrlPath(which): UrlPath<String>) -> Response {
    let text = match which.as_str() {
        "source" => app.source_ply.clone(),
        "target" => app.target_ply.clone(),
        "current" => app.snapshot.read().expect("snapshot lock").current_ply.clone(),
        other => return error(StatusCode::NOT_FOUND, format!("unknown cloud {other:?}"), None),
    };
    ([(header::CONTENT_TYPE, PLY_CONTENT_TYPE)], text.as_str().to_owned()).into_response()
}

async fn get_report(State(app): State<AppState>) -> Response {
    let snap = app.snapshot.read().expect("snapshot lock");
    match (&snap.report, &snap.report_error) {
        (Some(r), _) => Json(r.as_ref().clone()).into_response(),
        (None, Some(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.clone(), None),
        (None, None) => error(StatusCode::CONFLICT, "session has not completed", Some(snap.state.clone())),
    }
}

async fn events(State(app): State<AppState>) -> Sse<impl Stream<Item = Result<SseEvent, Infallible>>> {
    let rx = app.subscribe();
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(m) => return Some((Ok(SseEvent::default().event(m.name).data(m.data)), rx)),
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}

/// Maps a request path onto a file under `root`, refusing escapes.
fn asset_path(root: &Path, uri: &Uri) -> Option<PathBuf> {
    let rel = uri.path().trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let rel = Path::new(rel);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return None;
    }
    Some(root.join(rel))
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("wasm") => "application/wasm",
        _ => "application/octet-stream",
    }
}

async fn static_asset(State(app): State<AppState>, uri: Uri) -> Response {
    let Some(path) = app.ui_dir.as_deref().and_then(|root| asset_path(root, &uri)) else {
        return error(StatusCode::NOT_FOUND, "not found", None);
    };
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], Body::from(bytes)).into_response(),
        Err(_) => error(StatusCode::NOT_FOUND, "not found", None),
    }
}

pub async fn serve(app: AppState, listen: std::net::SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(listen)
        .await
        .map_err(|e| anyhow::anyhow!("cannot bind {listen}: {e}"))?;
    eprintln!("partreg: serving on http://{}", listener.local_addr()?);
    axum::serve(listener, router(app)).await?;
    Ok(())
}
