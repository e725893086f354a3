//! Blocking client for the task API, so simulated workers can drive a
//! running service the same way they drive an in-process store.

use reqwest::blocking::Client;
use reqwest::StatusCode;

use sensepipe_core::crowd::{AnnotationAnswers, Task, TaskStatus};
use sensepipe_core::simcrowd::TaskEndpoint;
use sensepipe_core::{Error, Result};

use crate::api::{AnswerPayload, TaskView, SCHEMA_VERSION};

pub struct HttpEndpoint {
    base: String,
    client: Client,
}

fn remote(msg: impl std::fmt::Display) -> Error {
    Error::Stream(std::io::Error::other(msg.to_string()))
}

impl HttpEndpoint {
    pub fn new(base: &str) -> Self {
        HttpEndpoint {
            base: base.trim_end_matches('/').to_string(),
            client: Client::new(),
        }
    }

    pub fn progress(&self) -> Result<sensepipe_core::crowd::Progress> {
        let resp = self.client.get(format!("{}/api/progress", self.base)).send().map_err(remote)?;
        resp.error_for_status().and_then(|r| r.json()).map_err(remote)
    }
}

impl TaskEndpoint for HttpEndpoint {
    fn next_task(&mut self, worker_id: &str) -> Result<Option<Task>> {
        let resp = self
            .client
            .get(format!("{}/api/tasks/next", self.base))
            .query(&[("worker", worker_id)])
            .send()
            .map_err(remote)?;
        match resp.status() {
            StatusCode::NO_CONTENT => Ok(None),
            StatusCode::OK => {
                let view: TaskView = resp.json().map_err(remote)?;
                Ok(Some(Task {
                    task_id: view.task_id,
                    post_id: view.post_id,
                    image_path: None,
                    image_url: view.image_url,
                    tweet_text: view.tweet_text,
                    proposed_country: view.proposed_country,
                    redundancy: view.redundancy,
                    completions: view.completions,
                    status: TaskStatus::Open,
                }))
            }
            s => Err(remote(format!("next task: HTTP {s}: {}", resp.text().unwrap_or_default()))),
        }
    }

    fn submit(&mut self, answers: AnnotationAnswers) -> Result<()> {
        let payload = AnswerPayload {
            schema_version: Some(SCHEMA_VERSION),
            worker_id: answers.worker_id,
            answers: answers.answers,
            submitted_at: Some(answers.submitted_at),
        };
        let resp = self
            .client
            .post(format!("{}/api/tasks/{}/answers", self.base, answers.task_id))
            .json(&payload)
            .send()
            .map_err(remote)?;
        match resp.status() {
            StatusCode::CREATED => Ok(()),
            s => Err(Error::Contract(format!(
                "answer for {} rejected: HTTP {s}: {}",
                answers.task_id,
                resp.text().unwrap_or_default()
            ))),
        }
    }
}
