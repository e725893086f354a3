//! Task store: tasks, answer sets, worker leases and the event log that makes
//! them durable.
//!
//! Every mutation is an event. An event is first appended to the log and only
//! then applied to memory, so the in-memory state never runs ahead of the log.
//! Replaying the log's complete lines reproduces the state after the last
//! acknowledged event.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};

use chrono::Utc;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::aggregate::{aggregate, AggregatedAnnotation, VetoMode};
use super::schema::FieldError;
use super::{AnnotationAnswers, Task, TaskStatus};
use crate::error::{Error, Result};
use crate::eventlog::{check_next, EventKind, EventLogEntry, FileLog, LogSink, NullLog};

pub const LOG_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StoreEvent {
    TaskCreated(Task),
    AnswerSubmitted(AnnotationAnswers),
    TaskCompleted { task_id: String },
}

#[derive(Deserialize)]
struct CompletedPayload {
    task_id: String,
}

impl StoreEvent {
    pub fn kind(&self) -> EventKind {
        match self {
            StoreEvent::TaskCreated(_) => EventKind::TaskCreated,
            StoreEvent::AnswerSubmitted(_) => EventKind::AnswerSubmitted,
            StoreEvent::TaskCompleted { .. } => EventKind::TaskCompleted,
        }
    }

    fn payload(&self) -> serde_json::Value {
        let v = match self {
            StoreEvent::TaskCreated(t) => serde_json::to_value(t),
            StoreEvent::AnswerSubmitted(a) => serde_json::to_value(a),
            StoreEvent::TaskCompleted { task_id } => Ok(serde_json::json!({ "task_id": task_id })),
        };
        v.expect("store events always serialize")
    }

    pub fn from_entry(entry: &EventLogEntry) -> Result<Self> {
        let bad = |e: serde_json::Error| Error::Corruption {
            seq: entry.seq,
            reason: format!("bad {:?} payload: {e}", entry.kind),
        };
        let p = entry.payload.clone();
        Ok(match entry.kind {
            EventKind::TaskCreated => StoreEvent::TaskCreated(serde_json::from_value(p).map_err(bad)?),
            EventKind::AnswerSubmitted => StoreEvent::AnswerSubmitted(serde_json::from_value(p).map_err(bad)?),
            EventKind::TaskCompleted => {
                let c: CompletedPayload = serde_json::from_value(p).map_err(bad)?;
                StoreEvent::TaskCompleted { task_id: c.task_id }
            }
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SubmitError {
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("worker {worker_id} already answered task {task_id}")]
    DuplicateWorker { task_id: String, worker_id: String },
    #[error("invalid answers: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<FieldError>),
    #[error("store failure: {0}")]
    Store(#[from] Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Progress {
    pub open: usize,
    pub complete: usize,
    pub answers: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Entry {
    task: Task,
    answers: Vec<AnnotationAnswers>,
}

/// Point-in-time copy of the durable state; the log entries after `last_seq`
/// are replayed on top of it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub last_seq: u64,
    tasks: BTreeMap<String, Entry>,
}

pub struct TaskStore {
    tasks: BTreeMap<String, Entry>,
    /// open tasks keyed by (completions + active leases, task_id)
    queue: BTreeSet<(u32, String)>,
    leases: HashMap<String, String>,
    lease_counts: HashMap<String, u32>,
    answered: HashMap<String, HashSet<String>>,
    answer_count: usize,
    last_seq: u64,
    sink: Box<dyn LogSink>,
    dir: Option<PathBuf>,
}

impl std::fmt::Debug for TaskStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TaskStore")
            .field("tasks", &self.tasks.len())
            .field("answers", &self.answer_count)
            .field("last_seq", &self.last_seq)
            .finish()
    }
}

impl Default for TaskStore {
    fn default() -> Self {
        Self::new(Box::new(NullLog))
    }
}

impl TaskStore {
    pub fn new(sink: Box<dyn LogSink>) -> Self {
        TaskStore {
            tasks: BTreeMap::new(),
            queue: BTreeSet::new(),
            leases: HashMap::new(),
            lease_counts: HashMap::new(),
            answered: HashMap::new(),
            answer_count: 0,
            last_seq: 0,
            sink,
            dir: None,
        }
    }

    /// Rebuilds state from log entries, then keeps logging to `sink`.
    pub fn replay(entries: &[EventLogEntry], sink: Box<dyn LogSink>) -> Result<Self> {
        let mut store = TaskStore::new(sink);
        store.apply_entries(entries)?;
        Ok(store)
    }

    /// Same as [`TaskStore::replay`], starting from a snapshot.
    pub fn restore(snapshot: Snapshot, entries: &[EventLogEntry], sink: Box<dyn LogSink>) -> Result<Self> {
        let mut store = TaskStore::new(sink);
        store.last_seq = snapshot.last_seq;
        for (id, entry) in snapshot.tasks {
            store.answer_count += entry.answers.len();
            store
                .answered
                .insert(id.clone(), entry.answers.iter().map(|a| a.worker_id.clone()).collect());
            if !entry.task.is_complete() {
                store.queue.insert((entry.task.completions, id.clone()));
            }
            store.tasks.insert(id, entry);
        }
        let later: Vec<_> = entries.iter().filter(|e| e.seq > snapshot.last_seq).cloned().collect();
        store.apply_entries(&later)?;
        Ok(store)
    }

    /// Opens the store kept in `dir` (`snapshot.json` + `events.jsonl`),
    /// creating an empty one if absent.
    pub fn open(dir: &Path, sync: bool) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (log, entries) = FileLog::open(&dir.join(LOG_FILE), sync)?;
        let snap_path = dir.join(SNAPSHOT_FILE);
        let mut store = match std::fs::read(&snap_path) {
            Ok(bytes) => {
                let snap: Snapshot = serde_json::from_slice(&bytes)?;
                TaskStore::restore(snap, &entries, Box::new(log))?
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => TaskStore::replay(&entries, Box::new(log))?,
            Err(e) => return Err(Error::io(snap_path, e)),
        };
        store.dir = Some(dir.to_path_buf());
        Ok(store)
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            last_seq: self.last_seq,
            tasks: self.tasks.clone(),
        }
    }

    /// Writes a snapshot next to the log (write to temp file, then rename).
    pub fn write_snapshot(&self) -> Result<PathBuf> {
        let dir = self
            .dir
            .as_ref()
            .ok_or_else(|| Error::contract("store has no directory"))?;
        let path = dir.join(SNAPSHOT_FILE);
        let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let bytes = serde_json::to_vec(&self.snapshot())?;
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    fn apply_entries(&mut self, entries: &[EventLogEntry]) -> Result<()> {
        for entry in entries {
            check_next(self.last_seq, entry.seq)?;
            let event = StoreEvent::from_entry(entry)?;
            self.apply(&event).map_err(|reason| Error::Corruption { seq: entry.seq, reason })?;
            self.last_seq = entry.seq;
        }
        Ok(())
    }

    fn apply(&mut self, event: &StoreEvent) -> std::result::Result<(), String> {
        match event {
            StoreEvent::TaskCreated(task) => {
                if self.tasks.contains_key(&task.task_id) {
                    return Err(format!("task {} created twice", task.task_id));
                }
                let mut task = task.clone();
                task.completions = 0;
                task.status = TaskStatus::Open;
                self.queue.insert((0, task.task_id.clone()));
                self.answered.insert(task.task_id.clone(), HashSet::new());
                self.tasks.insert(
                    task.task_id.clone(),
                    Entry {
                        task,
                        answers: Vec::new(),
                    },
                );
            }
            StoreEvent::AnswerSubmitted(a) => {
                let entry = self
                    .tasks
                    .get_mut(&a.task_id)
                    .ok_or_else(|| format!("answer for unknown task {}", a.task_id))?;
                let workers = self.answered.entry(a.task_id.clone()).or_default();
                if !workers.insert(a.worker_id.clone()) {
                    return Err(format!("worker {} answered {} twice", a.worker_id, a.task_id));
                }
                let leased = self.lease_counts.get(&a.task_id).copied().unwrap_or(0);
                let was_open = !entry.task.is_complete();
                if was_open {
                    self.queue.remove(&(entry.task.completions + leased, a.task_id.clone()));
                }
                entry.task.completions += 1;
                entry.answers.push(a.clone());
                if entry.task.is_complete() {
                    entry.task.status = TaskStatus::Complete;
                } else {
                    self.queue.insert((entry.task.completions + leased, a.task_id.clone()));
                }
                self.answer_count += 1;
            }
            StoreEvent::TaskCompleted { task_id } => {
                let entry = self
                    .tasks
                    .get(task_id)
                    .ok_or_else(|| format!("completion of unknown task {task_id}"))?;
                if !entry.task.is_complete() {
                    return Err(format!(
                        "task {task_id} marked complete with {} of {} answers",
                        entry.task.completions, entry.task.redundancy
                    ));
                }
            }
        }
        Ok(())
    }

    /// Appends then applies. A failed append leaves memory untouched.
    fn commit(&mut self, event: StoreEvent) -> Result<()> {
        // dry-run against the current state so that nothing invalid is logged
        if let StoreEvent::TaskCreated(t) = &event {
            if self.tasks.contains_key(&t.task_id) {
                return Err(Error::contract(format!("task {} already exists", t.task_id)));
            }
        }
        let entry = EventLogEntry {
            seq: self.last_seq + 1,
            kind: event.kind(),
            payload: event.payload(),
            at: Utc::now(),
        };
        self.sink.append(&entry).map_err(Error::Stream)?;
        self.apply(&event).map_err(|reason| Error::Corruption { seq: entry.seq, reason })?;
        self.last_seq = entry.seq;
        Ok(())
    }

    /// Adds tasks whose ids are new; returns how many were added.
    pub fn add_tasks<I: IntoIterator<Item = Task>>(&mut self, tasks: I) -> Result<usize> {
        let mut added = 0;
        for task in tasks {
            if task.redundancy < 1 {
                return Err(Error::contract(format!("task {} has redundancy 0", task.task_id)));
            }
            if self.tasks.contains_key(&task.task_id) {
                continue;
            }
            self.commit(StoreEvent::TaskCreated(task))?;
            added += 1;
        }
        Ok(added)
    }

    fn set_lease_count(&mut self, task_id: &str, delta: i64) {
        let Some(entry) = self.tasks.get(task_id) else {
            return;
        };
        let old = self.lease_counts.get(task_id).copied().unwrap_or(0);
        let new = (old as i64 + delta).max(0) as u32;
        if !entry.task.is_complete() {
            let c = entry.task.completions;
            self.queue.remove(&(c + old, task_id.to_string()));
            self.queue.insert((c + new, task_id.to_string()));
        }
        if new == 0 {
            self.lease_counts.remove(task_id);
        } else {
            self.lease_counts.insert(task_id.to_string(), new);
        }
    }

    fn release(&mut self, worker_id: &str) {
        if let Some(task_id) = self.leases.remove(worker_id) {
            self.set_lease_count(&task_id, -1);
        }
    }

    fn eligible(&self, task_id: &str, worker_id: &str) -> bool {
        let open = self.tasks.get(task_id).is_some_and(|e| !e.task.is_complete());
        open && !self.answered.get(task_id).is_some_and(|w| w.contains(worker_id))
    }

    /// The open task this worker should do next: the one with the fewest
    /// completions plus outstanding leases, ties broken by task id. Asking
    /// again without submitting returns the same task.
    pub fn next_task(&mut self, worker_id: &str) -> Result<Option<Task>> {
        if worker_id.trim().is_empty() {
            return Err(Error::contract("worker_id must be non-empty"));
        }
        if let Some(current) = self.leases.get(worker_id) {
            if self.eligible(current, worker_id) {
                return Ok(Some(self.tasks[current].task.clone()));
            }
            self.release(worker_id);
        }
        let pick = self
            .queue
            .iter()
            .find(|(_, id)| self.eligible(id, worker_id))
            .map(|(_, id)| id.clone());
        let Some(task_id) = pick else {
            return Ok(None);
        };
        self.leases.insert(worker_id.to_string(), task_id.clone());
        self.set_lease_count(&task_id, 1);
        Ok(Some(self.tasks[&task_id].task.clone()))
    }

    /// Validates and records one worker's answers. Answers arriving after the
    /// task is complete are stored but never aggregated.
    pub fn submit(&mut self, answers: AnnotationAnswers) -> std::result::Result<Task, SubmitError> {
        let entry = self
            .tasks
            .get(&answers.task_id)
            .ok_or_else(|| SubmitError::UnknownTask(answers.task_id.clone()))?;
        if answers.worker_id.trim().is_empty() {
            return Err(SubmitError::Invalid(vec![FieldError {
                field: "worker_id".into(),
                problem: super::schema::Problem::Missing,
            }]));
        }
        if self
            .answered
            .get(&answers.task_id)
            .is_some_and(|w| w.contains(&answers.worker_id))
        {
            return Err(SubmitError::DuplicateWorker {
                task_id: answers.task_id,
                worker_id: answers.worker_id,
            });
        }
        answers.answers.validate().map_err(SubmitError::Invalid)?;
        let completes = entry.task.completions + 1 == entry.task.redundancy;
        let task_id = answers.task_id.clone();
        let worker_id = answers.worker_id.clone();
        if self.leases.get(&worker_id) == Some(&task_id) {
            self.release(&worker_id);
        }
        self.commit(StoreEvent::AnswerSubmitted(answers))?;
        if completes {
            self.commit(StoreEvent::TaskCompleted {
                task_id: task_id.clone(),
            })?;
        }
        Ok(self.tasks[&task_id].task.clone())
    }

    pub fn task(&self, task_id: &str) -> Option<&Task> {
        self.tasks.get(task_id).map(|e| &e.task)
    }

    pub fn tasks(&self) -> impl Iterator<Item = &Task> {
        self.tasks.values().map(|e| &e.task)
    }

    pub fn answers(&self, task_id: &str) -> &[AnnotationAnswers] {
        self.tasks.get(task_id).map(|e| e.answers.as_slice()).unwrap_or(&[])
    }

    pub fn progress(&self) -> Progress {
        let complete = self.tasks.values().filter(|e| e.task.is_complete()).count();
        Progress {
            open: self.tasks.len() - complete,
            complete,
            answers: self.answer_count,
        }
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    /// Aggregates every complete task, in task id order.
    pub fn aggregate_complete(&self, veto: VetoMode) -> Result<Vec<AggregatedAnnotation>> {
        self.tasks
            .values()
            .filter(|e| e.task.is_complete())
            .map(|e| aggregate(&e.task, &e.answers, veto))
            .collect()
    }

    /// SHA-256 over the durable state: tasks and answers. Leases and the log
    /// position are not part of it; a completion marker changes nothing.
    pub fn state_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.tasks).expect("state serializes"));
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
