use std::io;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use sensepipe::api::{router, AnswerPayload, ApiOptions, AppState, TaskView};
use sensepipe_core::crowd::schema::{enumerate_sheets, Question};
use sensepipe_core::crowd::{AnswerSheet, ProposedCountry, Task, TaskStatus, TaskStore};
use sensepipe_core::eventlog::{EventLogEntry, LogSink};

fn task(id: &str, redundancy: u32) -> Task {
    Task {
        task_id: format!("task-{id}"),
        post_id: id.into(),
        image_path: Some(format!("img/{id}.png")),
        image_url: Some(format!("https://example.org/{id}.jpg")),
        tweet_text: format!("masks on the tram {id}"),
        proposed_country: ProposedCountry {
            code: "IT".into(),
            display_name: "Milan, IT".into(),
        },
        redundancy,
        completions: 0,
        status: TaskStatus::Open,
    }
}

fn app_with(store: TaskStore, options: ApiOptions) -> (Router, AppState) {
    let state = AppState::new(store, options);
    (router(state.clone()), state)
}

fn app(tasks: &[Task]) -> (Router, AppState) {
    let mut store = TaskStore::default();
    store.add_tasks(tasks.iter().cloned()).unwrap();
    app_with(store, ApiOptions::default())
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, body)
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post_json(uri: &str, body: &Value) -> Request<Body> {
    Request::post(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

fn photo_no() -> AnswerSheet {
    AnswerSheet::new().with(Question::PHOTO, "No")
}

fn payload(worker: &str, sheet: &AnswerSheet) -> Value {
    json!({ "worker_id": worker, "answers": sheet })
}

#[tokio::test]
async fn next_task_serves_view_then_204_when_exhausted() {
    let (app, _) = app(&[task("a", 1)]);
    let (status, body) = call(&app, get("/api/tasks/next?worker=w1")).await;
    assert_eq!(status, StatusCode::OK);
    let view: TaskView = serde_json::from_value(body).unwrap();
    assert_eq!(view.task_id, "task-a");
    assert_eq!(view.proposed_country.display_name, "Milan, IT");
    assert_eq!(view.tweet_text, "masks on the tram a");
    // no image root configured, so the original URL is passed on
    assert_eq!(view.image_url.as_deref(), Some("https://example.org/a.jpg"));

    let (status, _) = call(&app, post_json("/api/tasks/task-a/answers", &payload("w1", &photo_no()))).await;
    assert_eq!(status, StatusCode::CREATED);
    let (status, body) = call(&app, get("/api/tasks/next?worker=w1")).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    assert_eq!(body, Value::Null);
}

#[tokio::test]
async fn missing_worker_is_bad_request() {
    let (app, _) = app(&[task("a", 3)]);
    assert_eq!(call(&app, get("/api/tasks/next")).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(call(&app, get("/api/tasks/next?worker=")).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn accepted_answer_bumps_completions() {
    let (app, state) = app(&[task("a", 3)]);
    let (status, body) = call(&app, post_json("/api/tasks/task-a/answers", &payload("w1", &photo_no()))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["completions"], 1);
    assert_eq!(body["status"], "open");
    let (_, progress) = call(&app, get("/api/progress")).await;
    assert_eq!(progress, json!({ "open": 1, "complete": 0, "answers": 1 }));
    assert_eq!(state.with_store(|s| s.answers("task-a").len()).unwrap(), 1);
}

#[tokio::test]
async fn guard_violation_is_422_naming_the_guard() {
    let (app, _) = app(&[task("a", 3)]);
    let mut sheet = photo_no();
    sheet.set(Question::MASKS, Some("Yes"));
    let (status, body) = call(&app, post_json("/api/tasks/task-a/answers", &payload("w1", &sheet))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let errors = body["field_errors"].as_array().unwrap();
    assert_eq!(errors.len(), 1);
    assert_eq!(errors[0]["field"], "q4");
    assert_eq!(errors[0]["kind"], "guard_violation");
    assert!(errors[0]["guard"].as_str().unwrap().contains("q1"));
    let (_, progress) = call(&app, get("/api/progress")).await;
    assert_eq!(progress["answers"], 0);
}

#[tokio::test]
async fn bad_option_and_unknown_field_are_422() {
    let (app, _) = app(&[task("a", 3)]);
    let sheet = AnswerSheet::new().with(Question::PHOTO, "Perhaps");
    let (status, body) = call(&app, post_json("/api/tasks/task-a/answers", &payload("w1", &sheet))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["field_errors"][0]["kind"], "invalid_option");

    let extra = json!({ "worker_id": "w1", "answers": { "q1": "No", "q13": "Yes" } });
    assert_eq!(call(&app, post_json("/api/tasks/task-a/answers", &extra)).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let wrong_version = json!({ "schema_version": 9, "worker_id": "w1", "answers": { "q1": "No" } });
    assert_eq!(
        call(&app, post_json("/api/tasks/task-a/answers", &wrong_version)).await.0,
        StatusCode::UNPROCESSABLE_ENTITY
    );
}

#[tokio::test]
async fn repeated_post_is_409_and_stored_once() {
    let (app, state) = app(&[task("a", 3)]);
    let body = payload("w1", &photo_no());
    assert_eq!(call(&app, post_json("/api/tasks/task-a/answers", &body)).await.0, StatusCode::CREATED);
    let (status, err) = call(&app, post_json("/api/tasks/task-a/answers", &body)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert!(err["error"].as_str().unwrap().contains("w1"));
    assert_eq!(state.with_store(|s| s.answers("task-a").len()).unwrap(), 1);
}

#[tokio::test]
async fn unknown_task_is_404() {
    let (app, _) = app(&[task("a", 3)]);
    let (status, _) = call(&app, post_json("/api/tasks/task-zzz/answers", &payload("w1", &photo_no()))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn content_type_enforced() {
    let (app, _) = app(&[task("a", 3)]);
    let req = Request::post("/api/tasks/task-a/answers")
        .body(Body::from(payload("w1", &photo_no()).to_string()))
        .unwrap();
    assert_eq!(call(&app, req).await.0, StatusCode::UNSUPPORTED_MEDIA_TYPE);
    let req = Request::post("/api/tasks/task-a/answers")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    assert_eq!(call(&app, req).await.0, StatusCode::BAD_REQUEST);
}

/// Accepts appends until switched off.
#[derive(Clone)]
struct Switch(Arc<AtomicBool>);

impl LogSink for Switch {
    fn append(&mut self, _: &EventLogEntry) -> io::Result<()> {
        if self.0.load(Ordering::SeqCst) {
            Ok(())
        } else {
            Err(io::Error::other("disk full"))
        }
    }
}

#[tokio::test]
async fn store_failure_is_503_and_changes_nothing() {
    let up = Arc::new(AtomicBool::new(true));
    let mut store = TaskStore::new(Box::new(Switch(up.clone())));
    store.add_tasks([task("a", 3)]).unwrap();
    let (app, state) = app_with(store, ApiOptions::default());
    up.store(false, Ordering::SeqCst);
    let (status, body) = call(&app, post_json("/api/tasks/task-a/answers", &payload("w1", &photo_no()))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert!(body["error"].as_str().unwrap().contains("disk full"));
    assert_eq!(state.with_store(|s| s.progress().answers).unwrap(), 0);
    up.store(true, Ordering::SeqCst);
    let (status, _) = call(&app, post_json("/api/tasks/task-a/answers", &payload("w1", &photo_no()))).await;
    assert_eq!(status, StatusCode::CREATED);
}

#[tokio::test]
async fn indicators_endpoint() {
    let tasks: Vec<Task> = (0..4).map(|i| task(&format!("p{i}"), 1)).collect();
    let (app, _) = app(&tasks);
    let masks = ["Yes", "Yes", "No", "Cannot tell"];
    for (t, m) in tasks.iter().zip(masks) {
        let sheet = AnswerSheet::new()
            .with(Question::PHOTO, "Yes")
            .with(Question::number(2).unwrap(), "Yes")
            .with(Question::PEOPLE, "Yes")
            .with(Question::MASKS, m);
        let mut sheet = sheet;
        for q in Question::all() {
            if sheet.visible(q) && sheet.get(q).is_none() {
                sheet.set(q, Some(q.options()[0]));
            }
        }
        let (status, body) = call(&app, post_json(&format!("/api/tasks/{}/answers", t.task_id), &payload("w", &sheet))).await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
    }
    let (status, table) = call(&app, get("/api/indicators?question=q4&threshold=1")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(table["question_id"], "q4");
    let row = &table["rows"][0];
    assert_eq!(row["country"], "IT");
    assert_eq!(row["n_valid"], 3);
    assert_eq!(row["counts"]["Yes"], 2);
    let (_, table) = call(&app, get("/api/indicators?question=q4")).await;
    assert_eq!(table["threshold"], 50);
    assert!(table["rows"].as_array().unwrap().is_empty());
    assert_eq!(call(&app, get("/api/indicators?question=q99")).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn static_ui_and_images() {
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<!doctype html><title>annotate</title>").unwrap();
    let imgs = tempfile::tempdir().unwrap();
    std::fs::create_dir(imgs.path().join("img")).unwrap();
    std::fs::write(imgs.path().join("img/a.png"), b"png bytes").unwrap();
    let mut store = TaskStore::default();
    store.add_tasks([task("a", 3)]).unwrap();
    let options = ApiOptions {
        ui_dir: Some(ui.path().to_path_buf()),
        images_dir: Some(imgs.path().to_path_buf()),
        ..Default::default()
    };
    let (app, _) = app_with(store, options);
    let (status, page) = call(&app, get("/")).await;
    assert_eq!(status, StatusCode::OK);
    assert!(page.as_str().unwrap().contains("annotate"));
    let (_, view) = call(&app, get("/api/tasks/next?worker=w1")).await;
    assert_eq!(view["image_url"], "/images/img/a.png");
    let resp = app.clone().oneshot(get("/images/img/a.png")).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(&resp.into_body().collect().await.unwrap().to_bytes()[..], b"png bytes");
}

/// All ~1.2M reachable sheets go through the service's decode and validation
/// path; an evenly spaced sample also goes through the router.
#[tokio::test]
async fn every_guard_tree_payload_is_accepted() {
    let sheets = enumerate_sheets();
    let q1_no = sheets.iter().find(|s| s.get(Question::PHOTO) == Some("No")).unwrap();
    let wire = serde_json::to_value(q1_no).unwrap();
    for q in Question::all().skip(1) {
        assert_eq!(wire[q.id()], Value::Null, "{} must be null on the Q1=No path", q.id());
    }
    for (i, sheet) in sheets.iter().enumerate() {
        let body = serde_json::to_vec(&payload(&format!("w{i}"), sheet)).unwrap();
        let decoded: AnswerPayload = serde_json::from_slice(&body).unwrap();
        assert_eq!(&decoded.answers, sheet);
        assert!(decoded.answers.validate().is_ok(), "sheet {i}");
    }
    let step = 997;
    let sample: Vec<&AnswerSheet> = sheets.iter().step_by(step).chain([q1_no]).collect();
    let (app, state) = app(&[task("a", sample.len() as u32 + 1)]);
    for (i, sheet) in sample.iter().enumerate() {
        let (status, body) = call(&app, post_json("/api/tasks/task-a/answers", &payload(&format!("w{i}"), sheet))).await;
        assert_eq!(status, StatusCode::CREATED, "sheet {}: {body}", i * step);
    }
    assert_eq!(state.with_store(|s| s.answers("task-a").len()).unwrap(), sample.len());
}
