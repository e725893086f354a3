//! Relevance filter chains: plugins, short-circuit execution, profiling,
//! order optimization and evaluation against ground truth.

mod chain;
mod config;
mod eval;
mod optimize;
mod plugin;

pub use chain::{evaluate, profile_filters, run_chain, ChainOutcome, ChainDrop, ErrorPolicy, StageStats};
pub use config::{build_chain, load_chain_config, FilterSpec};
pub use eval::{eval_filter, FilterEval, Relevance};
pub use optimize::{expected_cost, optimize_order, rank_order, EXHAUSTIVE_LIMIT};
pub use plugin::{
    load_labels, ExternalFilter, FilterInput, FilterPlugin, FilterRole, ImageLabels, LabelOracle,
    LabelSet, PUBLIC_SCENES,
};

use serde::{Deserialize, Serialize};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Keep,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub filter_name: String,
    pub verdict: Verdict,
    pub score: f64,
    /// wall-clock seconds
    pub elapsed: f64,
}

/// Measured selectivity and cost of a filter applied on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterProfile {
    pub filter_name: String,
    pub removal_rate: f64,
    pub mean_cost: f64,
    pub sample_size: usize,
}

impl FilterProfile {
    pub fn new(name: impl Into<String>, removal_rate: f64, mean_cost: f64, sample_size: usize) -> Self {
        FilterProfile {
            filter_name: name.into(),
            removal_rate,
            mean_cost,
            sample_size,
        }
    }
}
