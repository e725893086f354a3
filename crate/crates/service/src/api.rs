//! HTTP facade over the task store.

use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use sensepipe_core::crowd::schema::Question;
use sensepipe_core::crowd::{AnnotationAnswers, AnswerSheet, FieldError, SubmitError, Task, TaskStatus, TaskStore, VetoMode};
use sensepipe_core::indicators::{compute_indicators, DEFAULT_MIN_POSTS};

/// Version of the task and answer JSON documents.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct ApiOptions {
    pub veto: VetoMode,
    /// write a snapshot every this many log entries (file-backed stores only)
    pub snapshot_every: Option<u64>,
    /// annotator UI bundle served at `/`
    pub ui_dir: Option<PathBuf>,
    /// task images served under `/images`
    pub images_dir: Option<PathBuf>,
}

impl Default for ApiOptions {
    fn default() -> Self {
        ApiOptions {
            veto: VetoMode::Any,
            snapshot_every: None,
            ui_dir: None,
            images_dir: None,
        }
    }
}

struct Shared {
    store: Mutex<TaskStore>,
    options: ApiOptions,
}

#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    pub fn new(store: TaskStore, options: ApiOptions) -> Self {
        AppState(Arc::new(Shared {
            store: Mutex::new(store),
            options,
        }))
    }

    /// Poisoning means a handler panicked mid-mutation; the store is then
    /// treated as unavailable rather than trusted.
    fn store(&self) -> Result<MutexGuard<'_, TaskStore>, ApiError> {
        self.0.store.lock().map_err(|_| ApiError::Unavailable("task store lock poisoned".into()))
    }

    pub fn with_store<T>(&self, f: impl FnOnce(&mut TaskStore) -> T) -> Option<T> {
        self.0.store.lock().ok().map(|mut s| f(&mut s))
    }
}

/// What a worker sees for one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskView {
    pub schema_version: u32,
    pub task_id: String,
    pub post_id: String,
    pub image_url: Option<String>,
    pub tweet_text: String,
    pub proposed_country: sensepipe_core::crowd::ProposedCountry,
    pub redundancy: u32,
    pub completions: u32,
}

impl TaskView {
    /// Local images go through `/images`; otherwise the original URL is passed on.
    pub fn from_task(task: &Task, local_images: bool) -> Self {
        let image_url = match (&task.image_path, local_images) {
            (Some(p), true) => Some(format!("/images/{}", p.trim_start_matches('/'))),
            _ => task.image_url.clone(),
        };
        TaskView {
            schema_version: SCHEMA_VERSION,
            task_id: task.task_id.clone(),
            post_id: task.post_id.clone(),
            image_url,
            tweet_text: task.tweet_text.clone(),
            proposed_country: task.proposed_country.clone(),
            redundancy: task.redundancy,
            completions: task.completions,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerPayload {
    #[serde(default)]
    pub schema_version: Option<u32>,
    pub worker_id: String,
    pub answers: AnswerSheet,
    #[serde(default)]
    pub submitted_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accepted {
    pub task_id: String,
    pub worker_id: String,
    pub completions: u32,
    pub redundancy: u32,
    pub status: TaskStatus,
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    NotFound(String),
    Conflict(String),
    Invalid(Vec<FieldError>),
    Malformed(String),
    UnsupportedMedia(String),
    Unavailable(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, json!({ "error": m })),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, json!({ "error": m })),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, json!({ "error": m })),
            ApiError::Invalid(errors) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({ "error": "invalid answers", "field_errors": errors }),
            ),
            ApiError::Malformed(m) => (StatusCode::UNPROCESSABLE_ENTITY, json!({ "error": m, "field_errors": [] })),
            ApiError::UnsupportedMedia(m) => (StatusCode::UNSUPPORTED_MEDIA_TYPE, json!({ "error": m })),
            ApiError::Unavailable(m) => (StatusCode::SERVICE_UNAVAILABLE, json!({ "error": m })),
        };
        (status, Json(body)).into_response()
    }
}

impl From<SubmitError> for ApiError {
    fn from(e: SubmitError) -> Self {
        match e {
            SubmitError::UnknownTask(id) => ApiError::NotFound(format!("unknown task {id}")),
            e @ SubmitError::DuplicateWorker { .. } => ApiError::Conflict(e.to_string()),
            SubmitError::Invalid(errors) => ApiError::Invalid(errors),
            SubmitError::Store(e) => ApiError::Unavailable(e.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        match r {
            JsonRejection::MissingJsonContentType(e) => ApiError::UnsupportedMedia(e.body_text()),
            JsonRejection::JsonSyntaxError(e) => ApiError::BadRequest(e.body_text()),
            other => ApiError::Malformed(other.body_text()),
        }
    }
}

#[derive(Debug, Deserialize)]
struct NextQuery {
    worker: Option<String>,
}

async fn next_task(State(state): State<AppState>, Query(q): Query<NextQuery>) -> Result<Response, ApiError> {
    let worker = q.worker.filter(|w| !w.trim().is_empty()).ok_or_else(|| ApiError::BadRequest("worker query parameter required".into()))?;
    let local = state.0.options.images_dir.is_some();
    let task = state.store()?.next_task(&worker).map_err(|e| ApiError::Unavailable(e.to_string()))?;
    Ok(match task {
        Some(t) => Json(TaskView::from_task(&t, local)).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn submit_answers(
    State(state): State<AppState>,
    Path(task_id): Path<String>,
    payload: Result<Json<AnswerPayload>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(payload) = payload?;
    if let Some(v) = payload.schema_version.filter(|&v| v != SCHEMA_VERSION) {
        return Err(ApiError::Malformed(format!("unsupported schema_version {v}")));
    }
    let answers = AnnotationAnswers {
        task_id,
        worker_id: payload.worker_id,
        submitted_at: payload.submitted_at.unwrap_or_else(Utc::now),
        answers: payload.answers,
    };
    let worker_id = answers.worker_id.clone();
    let mut store = state.store()?;
    let task = store.submit(answers)?;
    if let Some(every) = state.0.options.snapshot_every.filter(|&n| n > 0) {
        // a completion adds a second entry, so look for a crossed boundary
        let seq = store.last_seq();
        let before = seq.saturating_sub(if task.is_complete() { 2 } else { 1 });
        if seq / every > before / every {
            if let Err(e) = store.write_snapshot() {
                eprintln!("snapshot failed: {e}");
            }
        }
    }
    let body = Accepted {
        task_id: task.task_id,
        worker_id,
        completions: task.completions,
        redundancy: task.redundancy,
        status: task.status,
    };
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn progress(State(state): State<AppState>) -> Result<Response, ApiError> {
    Ok(Json(state.store()?.progress()).into_response())
}

#[derive(Debug, Deserialize)]
struct IndicatorQuery {
    question: Option<String>,
    threshold: Option<usize>,
}

async fn indicators(State(state): State<AppState>, Query(q): Query<IndicatorQuery>) -> Result<Response, ApiError> {
    let question = match q.question.as_deref() {
        None => Question::MASKS,
        Some(id) => Question::parse(id).ok_or_else(|| ApiError::BadRequest(format!("unknown question `{id}`")))?,
    };
    let threshold = q.threshold.unwrap_or(DEFAULT_MIN_POSTS);
    let aggregated = state
        .store()?
        .aggregate_complete(state.0.options.veto)
        .map_err(|e| ApiError::Unavailable(e.to_string()))?;
    Ok(Json(compute_indicators(&aggregated, question, threshold)).into_response())
}

pub fn router(state: AppState) -> Router {
    let mut app = Router::new()
        .route("/api/tasks/next", get(next_task))
        .route("/api/tasks/{id}/answers", post(submit_answers))
        .route("/api/progress", get(progress))
        .route("/api/indicators", get(indicators));
    if let Some(dir) = &state.0.options.images_dir {
        app = app.nest_service("/images", ServeDir::new(dir));
    }
    if let Some(dir) = &state.0.options.ui_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    app.with_state(state)
}

/// Binds and serves until ctrl-c.
pub async fn serve(addr: &str, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
