//! Simulated annotators answering from ground truth with a fixed accuracy.
//!
//! Each question is answered independently: the true value with probability
//! `accuracy`, otherwise a uniformly chosen other option. Questions are
//! answered in form order and only while visible, so a wrong answer on a
//! guard question hides (or reveals) the questions below it exactly as the
//! form would. A revealed question whose truth is null gets a uniform option.

use std::collections::HashMap;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::crowd::schema::{AnswerSheet, Question};
use crate::crowd::{AnnotationAnswers, SubmitError, Task, TaskStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimWorkerConfig {
    pub worker_count: usize,
    pub accuracy: f64,
    pub seed: u64,
}

impl SimWorkerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.worker_count < 1 {
            return Err(Error::contract("worker_count must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.accuracy) {
            return Err(Error::contract("accuracy must lie in [0, 1]"));
        }
        Ok(())
    }
}

pub fn worker_id(i: usize) -> String {
    format!("sim-{i:03}")
}

fn answer_rng(seed: u64, worker: &str, task_id: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(worker.as_bytes());
    h.update([0]);
    h.update(task_id.as_bytes());
    let mut key = [0u8; 32];
    key.copy_from_slice(&h.finalize());
    ChaCha8Rng::from_seed(key)
}

/// One worker's sheet for one task; a pure function of its arguments.
pub fn simulate_sheet(config: &SimWorkerConfig, worker: &str, task_id: &str, truth: &AnswerSheet) -> AnswerSheet {
    let mut rng = answer_rng(config.seed, worker, task_id);
    let mut sheet = AnswerSheet::new();
    for q in Question::all() {
        if !sheet.visible(q) {
            continue;
        }
        let options = q.options();
        let value = match truth.get(q).and_then(|t| q.canonical(t)) {
            None => *options.choose(&mut rng).expect("options"),
            Some(t) if rng.gen_bool(config.accuracy) => t,
            Some(t) => {
                let others: Vec<&str> = options.iter().copied().filter(|o| *o != t).collect();
                others.choose(&mut rng).copied().unwrap_or(t)
            }
        };
        sheet.set(q, Some(value));
    }
    sheet
}

/// Where simulated workers fetch tasks and send answers.
pub trait TaskEndpoint {
    fn next_task(&mut self, worker_id: &str) -> Result<Option<Task>>;
    fn submit(&mut self, answers: AnnotationAnswers) -> Result<()>;
}

impl TaskEndpoint for TaskStore {
    fn next_task(&mut self, worker_id: &str) -> Result<Option<Task>> {
        TaskStore::next_task(self, worker_id)
    }

    fn submit(&mut self, answers: AnnotationAnswers) -> Result<()> {
        match TaskStore::submit(self, answers) {
            Ok(_) => Ok(()),
            Err(SubmitError::Store(e)) => Err(e),
            Err(e) => Err(Error::contract(format!("simulated submission rejected: {e}"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimReport {
    pub submitted: usize,
    pub per_worker: Vec<usize>,
}

/// Timestamps are synthetic (one second apart) so runs are reproducible.
const SIM_EPOCH: i64 = 1_590_000_000;

/// Round-robin over the workers, each asking for its next task and answering
/// it, until no worker gets a task. `truth` is keyed by post id.
pub fn run_simulation<E: TaskEndpoint + ?Sized>(
    endpoint: &mut E,
    truth: &HashMap<String, AnswerSheet>,
    config: &SimWorkerConfig,
    mut on_submit: impl FnMut(&AnnotationAnswers),
) -> Result<SimReport> {
    config.validate()?;
    let workers: Vec<String> = (0..config.worker_count).map(worker_id).collect();
    let mut active = vec![true; workers.len()];
    let mut report = SimReport {
        submitted: 0,
        per_worker: vec![0; workers.len()],
    };
    while active.iter().any(|&a| a) {
        for (w, worker) in workers.iter().enumerate() {
            if !active[w] {
                continue;
            }
            let Some(task) = endpoint.next_task(worker)? else {
                active[w] = false;
                continue;
            };
            let t = truth
                .get(&task.post_id)
                .ok_or_else(|| Error::contract(format!("no ground truth for post {}", task.post_id)))?;
            let answers = AnnotationAnswers {
                task_id: task.task_id.clone(),
                worker_id: worker.clone(),
                submitted_at: DateTime::<Utc>::from_timestamp(SIM_EPOCH + report.submitted as i64, 0)
                    .expect("in range"),
                answers: simulate_sheet(config, worker, &task.task_id, t),
            };
            on_submit(&answers);
            endpoint.submit(answers)?;
            report.submitted += 1;
            report.per_worker[w] += 1;
        }
    }
    Ok(report)
}

/// The answer stream a fresh store would receive for these tasks.
pub fn simulate(tasks: &[Task], truth: &HashMap<String, AnswerSheet>, config: &SimWorkerConfig) -> Result<Vec<AnnotationAnswers>> {
    config.validate()?;
    if let Some(t) = tasks.iter().find(|t| !truth.contains_key(&t.post_id)) {
        return Err(Error::contract(format!("no ground truth for post {}", t.post_id)));
    }
    if let Some(t) = tasks.iter().find(|t| t.redundancy as usize > config.worker_count) {
        return Err(Error::contract(format!(
            "task {} needs {} workers, only {} simulated",
            t.task_id, t.redundancy, config.worker_count
        )));
    }
    let mut store = TaskStore::default();
    store.add_tasks(tasks.iter().cloned())?;
    let mut stream = Vec::new();
    run_simulation(&mut store, truth, config, |a| stream.push(a.clone()))?;
    Ok(stream)
}
