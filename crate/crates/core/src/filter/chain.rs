use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{FilterDecision, FilterInput, FilterPlugin, FilterProfile, Verdict};
use crate::error::{Error, Result};
use crate::ingest::PostRecord;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorPolicy {
    /// drop the record and count the failure
    #[default]
    Drop,
    /// abort the whole run
    Fail,
}

pub fn evaluate(filter: &dyn FilterPlugin, input: &FilterInput<'_>) -> Result<FilterDecision> {
    let start = Instant::now();
    let score = filter.score(input)?;
    let elapsed = start.elapsed().as_secs_f64();
    if !(0.0..=1.0).contains(&score) {
        return Err(Error::Filter {
            filter: filter.name().to_string(),
            reason: format!("score {score} outside [0, 1]"),
        });
    }
    let verdict = if score >= filter.threshold() {
        Verdict::Keep
    } else {
        Verdict::Drop
    };
    Ok(FilterDecision {
        filter_name: filter.name().to_string(),
        verdict,
        score,
        elapsed,
    })
}

/// Per-stage counters. `evaluated` excludes failed evaluations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub filter_name: String,
    pub input: usize,
    pub evaluated: usize,
    pub dropped: usize,
    pub errors: usize,
    pub total_seconds: f64,
}

impl StageStats {
    fn new(name: &str) -> Self {
        StageStats {
            filter_name: name.to_string(),
            ..Default::default()
        }
    }

    pub fn passed(&self) -> usize {
        self.input - self.dropped - self.errors
    }

    /// `None` when the stage never saw a record.
    pub fn to_profile(&self) -> Option<FilterProfile> {
        (self.evaluated > 0).then(|| FilterProfile {
            filter_name: self.filter_name.clone(),
            removal_rate: self.dropped as f64 / self.evaluated as f64,
            mean_cost: self.total_seconds / self.evaluated as f64,
            sample_size: self.evaluated,
        })
    }

    pub fn merge(&mut self, other: &StageStats) {
        self.input += other.input;
        self.evaluated += other.evaluated;
        self.dropped += other.dropped;
        self.errors += other.errors;
        self.total_seconds += other.total_seconds;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDrop {
    pub post_id: String,
    pub filter_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct ChainOutcome {
    pub kept: Vec<PostRecord>,
    pub stages: Vec<StageStats>,
    pub drops: Vec<ChainDrop>,
}

impl ChainOutcome {
    pub fn profiles(&self) -> Vec<FilterProfile> {
        self.stages.iter().filter_map(StageStats::to_profile).collect()
    }
}

/// Sends every record through the filters in order, stopping at the first drop.
pub fn run_chain(
    records: &[PostRecord],
    chain: &[Box<dyn FilterPlugin>],
    image_root: Option<&Path>,
    policy: ErrorPolicy,
) -> Result<ChainOutcome> {
    let mut out = ChainOutcome {
        stages: chain.iter().map(|f| StageStats::new(f.name())).collect(),
        ..Default::default()
    };
    'records: for record in records {
        let input = FilterInput::new(record, image_root);
        for (filter, stats) in chain.iter().zip(out.stages.iter_mut()) {
            stats.input += 1;
            match evaluate(filter.as_ref(), &input) {
                Ok(d) => {
                    stats.evaluated += 1;
                    stats.total_seconds += d.elapsed;
                    if d.verdict == Verdict::Drop {
                        stats.dropped += 1;
                        out.drops.push(ChainDrop {
                            post_id: record.post_id.clone(),
                            filter_name: d.filter_name,
                            error: None,
                        });
                        continue 'records;
                    }
                }
                Err(e) if policy == ErrorPolicy::Drop => {
                    stats.errors += 1;
                    out.drops.push(ChainDrop {
                        post_id: record.post_id.clone(),
                        filter_name: filter.name().to_string(),
                        error: Some(e.to_string()),
                    });
                    continue 'records;
                }
                Err(e) => return Err(e),
            }
        }
        out.kept.push(record.clone());
    }
    Ok(out)
}

/// Applies each filter to the whole sample independently (no chaining).
/// Failed evaluations are left out of the sample size.
pub fn profile_filters(
    sample: &[PostRecord],
    filters: &[Box<dyn FilterPlugin>],
    image_root: Option<&Path>,
) -> Result<Vec<FilterProfile>> {
    if sample.is_empty() {
        return Err(Error::contract("profiling sample is empty"));
    }
    filters
        .iter()
        .map(|f| {
            let mut stats = StageStats::new(f.name());
            for record in sample {
                let input = FilterInput::new(record, image_root);
                stats.input += 1;
                match evaluate(f.as_ref(), &input) {
                    Ok(d) => {
                        stats.evaluated += 1;
                        stats.total_seconds += d.elapsed;
                        if d.verdict == Verdict::Drop {
                            stats.dropped += 1;
                        }
                    }
                    Err(_) => stats.errors += 1,
                }
            }
            stats.to_profile().ok_or_else(|| Error::Filter {
                filter: f.name().to_string(),
                reason: "every evaluation in the profiling sample failed".into(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{FilterRole, ImageLabels, LabelOracle, LabelSet};
    use crate::ingest::tests::post;
    use std::collections::HashSet;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    struct Fixed {
        name: String,
        score: f64,
        calls: Arc<AtomicUsize>,
    }

    impl FilterPlugin for Fixed {
        fn name(&self) -> &str {
            &self.name
        }
        fn threshold(&self) -> f64 {
            0.5
        }
        fn score(&self, _: &FilterInput<'_>) -> Result<f64> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(self.score)
        }
    }

    fn fixed(name: &str, score: f64) -> (Box<dyn FilterPlugin>, Arc<AtomicUsize>) {
        let calls = Arc::new(AtomicUsize::new(0));
        (
            Box::new(Fixed {
                name: name.into(),
                score,
                calls: calls.clone(),
            }),
            calls,
        )
    }

    #[test]
    fn verdict_follows_threshold() {
        let (f, _) = fixed("f", 0.5);
        let r = post("a", "", 0);
        assert_eq!(evaluate(f.as_ref(), &FilterInput::new(&r, None)).unwrap().verdict, Verdict::Keep);
        let (f, _) = fixed("f", 0.49);
        assert_eq!(evaluate(f.as_ref(), &FilterInput::new(&r, None)).unwrap().verdict, Verdict::Drop);
        let (f, _) = fixed("f", 1.5);
        assert!(evaluate(f.as_ref(), &FilterInput::new(&r, None)).is_err());
    }

    #[test]
    fn empty_chain_is_identity() {
        let recs: Vec<_> = (0..4).map(|i| post(&format!("p{i}"), "", i)).collect();
        let out = run_chain(&recs, &[], None, ErrorPolicy::Drop).unwrap();
        assert_eq!(out.kept, recs);
        assert!(out.stages.is_empty());
    }

    #[test]
    fn short_circuit_skips_later_filters() {
        let (a, a_calls) = fixed("a", 0.0);
        let (b, b_calls) = fixed("b", 1.0);
        let recs: Vec<_> = (0..10).map(|i| post(&format!("p{i}"), "", i)).collect();
        let out = run_chain(&recs, &[a, b], None, ErrorPolicy::Drop).unwrap();
        assert!(out.kept.is_empty());
        assert_eq!(a_calls.load(Ordering::SeqCst), 10);
        assert_eq!(b_calls.load(Ordering::SeqCst), 0);
        assert_eq!(out.stages[1].evaluated, 0);
        assert!(out.stages[1].to_profile().is_none());
        assert_eq!(out.stages[0].to_profile().unwrap().removal_rate, 1.0);
    }

    /// 1,000 records; each of four oracle filters drops a disjoint planted subset.
    fn planted() -> (Vec<PostRecord>, LabelSet, [HashSet<String>; 4]) {
        let mut recs = Vec::new();
        let mut labels = std::collections::HashMap::new();
        let mut sets: [HashSet<String>; 4] = Default::default();
        for i in 0..1000 {
            let id = format!("p{i:04}");
            let mut l = ImageLabels {
                post_id: id.clone(),
                is_photo: Some(true),
                nsfw: Some(false),
                people: Some(3),
                scene: Some("street".into()),
            };
            // 100 non-photos, 50 nsfw, 200 solo, 150 private; rest pass
            match i {
                0..=99 => {
                    l.is_photo = Some(false);
                    sets[0].insert(id.clone());
                }
                100..=149 => {
                    l.nsfw = Some(true);
                    sets[1].insert(id.clone());
                }
                150..=349 => {
                    l.people = Some(1);
                    sets[2].insert(id.clone());
                }
                350..=499 => {
                    l.scene = Some("kitchen".into());
                    sets[3].insert(id.clone());
                }
                _ => {}
            }
            labels.insert(id.clone(), l);
            recs.push(post(&id, "", i));
        }
        (recs, Arc::new(labels), sets)
    }

    fn oracles(labels: &LabelSet, order: [usize; 4]) -> Vec<Box<dyn FilterPlugin>> {
        let all = [
            ("photo", FilterRole::Photo),
            ("nsfw", FilterRole::Nsfw),
            ("person", FilterRole::Person),
            ("scene", FilterRole::Scene),
        ];
        order
            .iter()
            .map(|&i| Box::new(LabelOracle::new(all[i].0, all[i].1, labels.clone())) as Box<dyn FilterPlugin>)
            .collect()
    }

    #[test]
    fn planted_chain_matches_set_arithmetic() {
        let (recs, labels, sets) = planted();
        let out = run_chain(&recs, &oracles(&labels, [0, 1, 2, 3]), None, ErrorPolicy::Drop).unwrap();
        let removed: HashSet<_> = sets.iter().flatten().cloned().collect();
        assert_eq!(out.kept.len(), 1000 - removed.len());
        assert!(out.kept.iter().all(|r| !removed.contains(&r.post_id)));
        let dropped: Vec<_> = out.stages.iter().map(|s| s.dropped).collect();
        assert_eq!(dropped, [100, 50, 200, 150]);
        // each stage's input is the previous stage's survivors
        let mut expected_input = 1000;
        for s in &out.stages {
            assert_eq!(s.input, expected_input);
            assert_eq!(s.evaluated + s.errors, s.input);
            expected_input = s.passed();
        }
        assert_eq!(expected_input, out.kept.len());
    }

    #[test]
    fn kept_set_independent_of_order() {
        let (recs, labels, _) = planted();
        let reference = run_chain(&recs, &oracles(&labels, [0, 1, 2, 3]), None, ErrorPolicy::Drop)
            .unwrap()
            .kept;
        for order in [[3, 2, 1, 0], [2, 0, 3, 1], [1, 3, 0, 2]] {
            let out = run_chain(&recs, &oracles(&labels, order), None, ErrorPolicy::Drop).unwrap();
            assert_eq!(out.kept, reference);
        }
    }

    #[test]
    fn profiles_equal_planted_fractions() {
        let (recs, labels, _) = planted();
        let profiles = profile_filters(&recs, &oracles(&labels, [0, 1, 2, 3]), None).unwrap();
        let rates: Vec<_> = profiles.iter().map(|p| p.removal_rate).collect();
        assert_eq!(rates, [0.1, 0.05, 0.2, 0.15]);
        assert!(profiles.iter().all(|p| p.sample_size == 1000));
        let (never, _) = fixed("never", 1.0);
        let p = profile_filters(&recs, &[never], None).unwrap();
        assert_eq!(p[0].removal_rate, 0.0);
        assert!(profile_filters(&[], &oracles(&labels, [0, 1, 2, 3]), None).is_err());
    }

    #[test]
    fn error_policy() {
        let labels: LabelSet = Arc::new(Default::default());
        let chain: Vec<Box<dyn FilterPlugin>> =
            vec![Box::new(LabelOracle::new("photo", FilterRole::Photo, labels))];
        let recs = vec![post("a", "", 0)];
        let out = run_chain(&recs, &chain, None, ErrorPolicy::Drop).unwrap();
        assert!(out.kept.is_empty());
        assert_eq!(out.stages[0].errors, 1);
        assert!(out.drops[0].error.is_some());
        assert!(run_chain(&recs, &chain, None, ErrorPolicy::Fail).is_err());
    }
}
