//! Real sockets: concurrent workers and the simulated crowd over HTTP.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::thread;

use sensepipe::api::{router, ApiOptions, AppState, TaskView};
use sensepipe::client::HttpEndpoint;
use sensepipe_core::crowd::schema::{enumerate_sheets, AnswerSheet, Question};
use sensepipe_core::crowd::{ProposedCountry, Task, TaskStatus, TaskStore, VetoMode};
use sensepipe_core::simcrowd::{run_simulation, SimWorkerConfig};

fn tasks(n: usize, redundancy: u32) -> Vec<Task> {
    (0..n)
        .map(|i| Task {
            task_id: format!("task-p{i:03}"),
            post_id: format!("p{i:03}"),
            image_path: None,
            image_url: None,
            tweet_text: String::new(),
            proposed_country: ProposedCountry {
                code: "ES".into(),
                display_name: "Madrid, ES".into(),
            },
            redundancy,
            completions: 0,
            status: TaskStatus::Open,
        })
        .collect()
}

/// Serves on an ephemeral port from a background runtime.
fn spawn(state: AppState) -> SocketAddr {
    let (tx, rx) = std::sync::mpsc::channel();
    thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, router(state)).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

#[test]
fn concurrent_workers_complete_every_task_exactly() {
    let n_tasks = 40;
    let mut store = TaskStore::default();
    store.add_tasks(tasks(n_tasks, 3)).unwrap();
    let state = AppState::new(store, ApiOptions::default());
    let addr = spawn(state.clone());
    let base = format!("http://{addr}");
    let sheet = AnswerSheet::new().with(Question::PHOTO, "No");

    let handles: Vec<_> = (0..6)
        .map(|w| {
            let base = base.clone();
            let sheet = sheet.clone();
            thread::spawn(move || {
                let client = reqwest::blocking::Client::new();
                let worker = format!("worker-{w}");
                let mut codes: HashMap<u16, usize> = HashMap::new();
                loop {
                    let resp = client
                        .get(format!("{base}/api/tasks/next"))
                        .query(&[("worker", &worker)])
                        .send()
                        .unwrap();
                    if resp.status() == 204 {
                        break;
                    }
                    let view: TaskView = resp.json().unwrap();
                    let code = client
                        .post(format!("{base}/api/tasks/{}/answers", view.task_id))
                        .json(&serde_json::json!({ "worker_id": worker, "answers": sheet }))
                        .send()
                        .unwrap()
                        .status()
                        .as_u16();
                    *codes.entry(code).or_default() += 1;
                }
                codes
            })
        })
        .collect();
    let mut codes: HashMap<u16, usize> = HashMap::new();
    for h in handles {
        for (c, n) in h.join().unwrap() {
            *codes.entry(c).or_default() += n;
        }
    }
    // every POST of the happy path is accepted; none is a duplicate
    assert_eq!(codes.keys().copied().collect::<Vec<_>>(), [201]);
    let (progress, per_task) = state
        .with_store(|s| {
            let per: Vec<u32> = s.tasks().map(|t| t.completions).collect();
            (s.progress(), per)
        })
        .unwrap();
    assert_eq!(progress.complete, n_tasks);
    assert_eq!(progress.open, 0);
    // a lease can outlive completion by others; such answers are kept but not aggregated
    assert!(progress.answers >= 3 * n_tasks);
    assert!(per_task.iter().all(|&c| c >= 3));
    let aggregated = state.with_store(|s| s.aggregate_complete(VetoMode::Any).unwrap()).unwrap();
    assert!(aggregated.iter().all(|a| a.contributing_workers.len() == 3));
}

#[test]
fn simulated_crowd_over_http_matches_direct_store() {
    let ts = tasks(25, 3);
    let sheets = enumerate_sheets();
    let truth: HashMap<String, AnswerSheet> = ts
        .iter()
        .enumerate()
        .map(|(i, t)| (t.post_id.clone(), sheets[(i * 4099) % sheets.len()].clone()))
        .collect();
    let cfg = SimWorkerConfig {
        worker_count: 4,
        accuracy: 0.85,
        seed: 5,
    };

    let mut direct = TaskStore::default();
    direct.add_tasks(ts.clone()).unwrap();
    let direct_report = run_simulation(&mut direct, &truth, &cfg, |_| {}).unwrap();

    let mut served = TaskStore::default();
    served.add_tasks(ts).unwrap();
    let state = AppState::new(served, ApiOptions::default());
    let addr = spawn(state.clone());
    let mut endpoint = HttpEndpoint::new(&format!("http://{addr}/"));
    let http_report = run_simulation(&mut endpoint, &truth, &cfg, |_| {}).unwrap();

    assert_eq!(http_report, direct_report);
    assert_eq!(endpoint.progress().unwrap(), direct.progress());
    let a = direct.aggregate_complete(VetoMode::Any).unwrap();
    let b = state.with_store(|s| s.aggregate_complete(VetoMode::Any).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn file_store_survives_restart_with_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let ts = tasks(10, 2);
    let truth: HashMap<String, AnswerSheet> = ts
        .iter()
        .map(|t| (t.post_id.clone(), AnswerSheet::new().with(Question::PHOTO, "No")))
        .collect();
    let hash = {
        let mut store = TaskStore::open(dir.path(), true).unwrap();
        store.add_tasks(ts).unwrap();
        let options = ApiOptions {
            snapshot_every: Some(7),
            ..Default::default()
        };
        let state = AppState::new(store, options);
        let addr = spawn(state.clone());
        let cfg = SimWorkerConfig {
            worker_count: 2,
            accuracy: 1.0,
            seed: 1,
        };
        run_simulation(&mut HttpEndpoint::new(&format!("http://{addr}")), &truth, &cfg, |_| {}).unwrap();
        state.with_store(|s| s.state_hash()).unwrap()
    };
    assert!(dir.path().join(sensepipe_core::crowd::SNAPSHOT_FILE).exists());
    let reopened = TaskStore::open(dir.path(), false).unwrap();
    assert_eq!(reopened.state_hash(), hash);
    assert_eq!(reopened.progress().complete, 10);
}
