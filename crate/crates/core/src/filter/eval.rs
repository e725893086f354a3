use serde::{Deserialize, Serialize};

use super::{FilterDecision, Verdict};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relevance {
    Relevant,
    Irrelevant,
}

/// Confusion counts with precision/recall/F1; a metric whose denominator is
/// zero is reported as 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterEval {
    pub filter_name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn eval_filter(decisions: &[FilterDecision], truth: &[Relevance]) -> Result<FilterEval> {
    if decisions.len() != truth.len() {
        return Err(Error::contract(format!(
            "{} decisions but {} truth labels",
            decisions.len(),
            truth.len()
        )));
    }
    if decisions.is_empty() {
        return Err(Error::contract("cannot evaluate an empty decision list"));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (d, t) in decisions.iter().zip(truth) {
        match (d.verdict, t) {
            (Verdict::Keep, Relevance::Relevant) => tp += 1,
            (Verdict::Keep, Relevance::Irrelevant) => fp += 1,
            (Verdict::Drop, Relevance::Relevant) => fn_ += 1,
            (Verdict::Drop, Relevance::Irrelevant) => tn += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(FilterEval {
        filter_name: decisions[0].filter_name.clone(),
        precision,
        recall,
        f1,
        tp,
        fp,
        fn_,
        tn,
    })
}
