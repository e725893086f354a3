//! Crowd annotation: tasks with redundancy, answer validation, majority
//! aggregation and the task store.

mod aggregate;
pub mod schema;
mod store;

pub use aggregate::{aggregate, majority, Aggregated, AggregatedAnnotation, VetoMode};
pub use schema::{AnswerSheet, FieldError, Problem, Question};
pub use store::{Progress, Snapshot, StoreEvent, SubmitError, TaskStore, LOG_FILE, SNAPSHOT_FILE};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geocode::GeoResolution;
use crate::ingest::PostRecord;

pub const DEFAULT_REDUNDANCY: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Open,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposedCountry {
    pub code: String,
    pub display_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub post_id: String,
    #[serde(default)]
    pub image_path: Option<String>,
    #[serde(default)]
    pub image_url: Option<String>,
    pub tweet_text: String,
    pub proposed_country: ProposedCountry,
    pub redundancy: u32,
    #[serde(default)]
    pub completions: u32,
    #[serde(default = "open")]
    pub status: TaskStatus,
}

fn open() -> TaskStatus {
    TaskStatus::Open
}

impl Task {
    pub fn is_complete(&self) -> bool {
        self.completions >= self.redundancy
    }

    pub fn task_id_for(post_id: &str) -> String {
        format!("task-{post_id}")
    }
}

/// One worker's response to one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationAnswers {
    pub task_id: String,
    pub worker_id: String,
    pub submitted_at: DateTime<Utc>,
    pub answers: AnswerSheet,
}

/// One open task per located post; posts without a resolution never reach the crowd.
pub fn create_tasks<'a, I>(located: I, redundancy: u32) -> Result<Vec<Task>>
where
    I: IntoIterator<Item = (&'a PostRecord, Option<&'a GeoResolution>)>,
{
    if redundancy < 1 {
        return Err(Error::contract("redundancy must be at least 1"));
    }
    Ok(located
        .into_iter()
        .filter_map(|(record, res)| {
            let res = res?;
            Some(Task {
                task_id: Task::task_id_for(&record.post_id),
                post_id: record.post_id.clone(),
                image_path: record
                    .image_path
                    .as_ref()
                    .map(|p| p.to_string_lossy().into_owned()),
                image_url: Some(record.image_url.clone()),
                tweet_text: record.text.clone(),
                proposed_country: ProposedCountry {
                    code: res.country.clone(),
                    display_name: res.display_name.clone(),
                },
                redundancy,
                completions: 0,
                status: TaskStatus::Open,
            })
        })
        .collect())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geocode::{Chosen, GeoSource};
    use crate::ingest::tests::post;

    pub(crate) fn resolution(post_id: &str, country: &str) -> GeoResolution {
        GeoResolution {
            post_id: post_id.into(),
            candidates: vec![],
            chosen: Chosen::Native(crate::ingest::GeoPoint { lat: 0.0, lon: 0.0 }),
            country: country.into(),
            source: GeoSource::Native,
            display_name: country.into(),
        }
    }

    #[test]
    fn one_task_per_resolved_post() {
        let recs: Vec<_> = (0..12).map(|i| post(&format!("p{i:02}"), "", i)).collect();
        let res: Vec<_> = recs.iter().map(|r| resolution(&r.post_id, "IT")).collect();
        let items = recs
            .iter()
            .zip(&res)
            .enumerate()
            .map(|(i, (r, g))| (r, (i < 10).then_some(g)));
        let tasks = create_tasks(items, 3).unwrap();
        assert_eq!(tasks.len(), 10);
        assert!(tasks.iter().all(|t| t.status == TaskStatus::Open && t.completions == 0));
        let needed: u32 = tasks.iter().map(|t| t.redundancy - t.completions).sum();
        assert_eq!(needed, 30);
    }

    #[test]
    fn zero_redundancy_rejected() {
        assert!(create_tasks(std::iter::empty(), 0).is_err());
    }
}
