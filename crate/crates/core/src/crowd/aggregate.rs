use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::schema::{Question, QUESTION_COUNT, SURELY_NOT};
use super::{AnnotationAnswers, Task};
use crate::error::{Error, Result};

/// Per-question outcome of the majority vote.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Aggregated {
    Value(String),
    Unresolved,
    Null,
}

pub const UNRESOLVED: &str = "UNRESOLVED";

impl Aggregated {
    pub fn value(&self) -> Option<&str> {
        match self {
            Aggregated::Value(v) => Some(v),
            _ => None,
        }
    }
}

impl Serialize for Aggregated {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Aggregated::Value(v) => s.serialize_str(v),
            Aggregated::Unresolved => s.serialize_str(UNRESOLVED),
            Aggregated::Null => s.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for Aggregated {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(match Option::<String>::deserialize(d)? {
            None => Aggregated::Null,
            Some(v) if v == UNRESOLVED => Aggregated::Unresolved,
            Some(v) => Aggregated::Value(v),
        })
    }
}

/// Strictly most frequent non-null value; a tie for first place is unresolved.
pub fn majority<'a, I>(values: I) -> Aggregated
where
    I: IntoIterator<Item = Option<&'a str>>,
{
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in values.into_iter().flatten() {
        *counts.entry(v).or_default() += 1;
    }
    let Some(&top) = counts.values().max() else {
        return Aggregated::Null;
    };
    let mut winners = counts.iter().filter(|(_, &c)| c == top);
    let (first, _) = winners.next().expect("max exists");
    if winners.next().is_some() {
        Aggregated::Unresolved
    } else {
        Aggregated::Value(first.to_string())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VetoMode {
    /// any single "Surely not" on the location question discards the post
    #[default]
    Any,
    /// only a majority "Surely not" discards it
    Majority,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregatedAnnotation {
    pub task_id: String,
    pub post_id: String,
    pub country: String,
    pub values: Vec<Aggregated>,
    pub location_valid: bool,
    pub contributing_workers: Vec<String>,
}

impl AggregatedAnnotation {
    pub fn get(&self, q: Question) -> &Aggregated {
        &self.values[q.index()]
    }
}

/// Majority-merges the first `redundancy` answer sets of a task (arrival order).
pub fn aggregate(task: &Task, answer_sets: &[AnnotationAnswers], veto: VetoMode) -> Result<AggregatedAnnotation> {
    let need = task.redundancy as usize;
    if answer_sets.len() < need {
        return Err(Error::contract(format!(
            "task {} has {} of {} answer sets",
            task.task_id,
            answer_sets.len(),
            need
        )));
    }
    let used = &answer_sets[..need];
    let mut workers = HashSet::new();
    for a in used {
        if a.task_id != task.task_id {
            return Err(Error::contract(format!("answer for {} given to {}", a.task_id, task.task_id)));
        }
        if !workers.insert(a.worker_id.as_str()) {
            return Err(Error::contract(format!(
                "worker {} answered task {} twice",
                a.worker_id, task.task_id
            )));
        }
    }
    let values: Vec<Aggregated> = (0..QUESTION_COUNT)
        .map(|i| {
            let q = Question::all().nth(i).expect("in range");
            majority(used.iter().map(|a| a.answers.get(q)))
        })
        .collect();
    let vetoed = match veto {
        VetoMode::Any => used.iter().any(|a| a.answers.get(Question::LOCATION) == Some(SURELY_NOT)),
        VetoMode::Majority => values[Question::LOCATION.index()].value() == Some(SURELY_NOT),
    };
    Ok(AggregatedAnnotation {
        task_id: task.task_id.clone(),
        post_id: task.post_id.clone(),
        country: task.proposed_country.code.clone(),
        values,
        location_valid: !vetoed,
        contributing_workers: used.iter().map(|a| a.worker_id.clone()).collect(),
    })
}
