//! Per-country answer percentages, survey comparison and map export.

mod choropleth;
mod correlate;
mod survey;

pub use choropleth::{choropleth_csv, choropleth_geojson, choropleth_html, export_choropleth, ChoroplethFiles};
pub use correlate::{compare, pearson, Category, CorrelationReport, CountryPair, NONE_IN_COMMON};
pub use survey::{load_survey, map_survey, read_survey, SurveyCategories, SurveyRecord};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::crowd::schema::Question;
use crate::crowd::AggregatedAnnotation;

pub const DEFAULT_MIN_POSTS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryRow {
    pub country: String,
    pub counts: BTreeMap<String, usize>,
    pub n_valid: usize,
    pub percentages: BTreeMap<String, f64>,
}

impl CountryRow {
    pub fn pct(&self, option: &str) -> f64 {
        self.percentages.get(option).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorTable {
    pub question_id: String,
    pub threshold: usize,
    /// options counted, in form order
    pub options: Vec<String>,
    /// sorted by country code
    pub rows: Vec<CountryRow>,
    /// valid counts of the countries left out for being under the threshold
    #[serde(default)]
    pub below_threshold: BTreeMap<String, usize>,
}

impl IndicatorTable {
    pub fn row(&self, country: &str) -> Option<&CountryRow> {
        self.rows.iter().find(|r| r.country == country)
    }

    pub fn countries(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|r| r.country.as_str())
    }
}

/// Option counts per country; merging is plain addition, so partial counts
/// from any split of the input combine to the same result.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Counts(BTreeMap<String, BTreeMap<&'static str, usize>>);

impl Counts {
    pub fn add(&mut self, country: &str, option: &'static str) {
        *self.0.entry(country.to_string()).or_default().entry(option).or_default() += 1;
    }

    pub fn merge(mut self, other: Counts) -> Counts {
        for (c, opts) in other.0 {
            let mine = self.0.entry(c).or_default();
            for (o, n) in opts {
                *mine.entry(o).or_default() += n;
            }
        }
        self
    }
}

pub fn count_answers(annotations: &[AggregatedAnnotation], question: Question) -> Counts {
    let substantive = question.substantive_options();
    let mut counts = Counts::default();
    for a in annotations.iter().filter(|a| a.location_valid) {
        if let Some(v) = a.get(question).value() {
            if let Some(opt) = substantive.iter().find(|o| **o == v) {
                counts.add(&a.country, opt);
            }
        }
    }
    counts
}

/// Percentages of each substantive option among location-validated
/// annotations. "Cannot tell"/"Not sure", unresolved and null answers are
/// left out of both numerator and denominator; countries with fewer than
/// `threshold` valid answers are omitted.
pub fn compute_indicators(annotations: &[AggregatedAnnotation], question: Question, threshold: usize) -> IndicatorTable {
    table_from_counts(count_answers(annotations, question), question, threshold)
}

pub fn table_from_counts(counts: Counts, question: Question, threshold: usize) -> IndicatorTable {
    let options = question.substantive_options();
    let mut table = IndicatorTable {
        question_id: question.id().to_string(),
        threshold,
        options: options.iter().map(|o| o.to_string()).collect(),
        rows: Vec::new(),
        below_threshold: BTreeMap::new(),
    };
    for (country, opts) in counts.0 {
        let n_valid: usize = opts.values().sum();
        if n_valid == 0 {
            continue;
        }
        if n_valid < threshold {
            table.below_threshold.insert(country, n_valid);
            continue;
        }
        let counts: BTreeMap<String, usize> = options
            .iter()
            .map(|o| (o.to_string(), opts.get(o).copied().unwrap_or(0)))
            .collect();
        let percentages = counts
            .iter()
            .map(|(o, &c)| (o.clone(), c as f64 / n_valid as f64))
            .collect();
        table.rows.push(CountryRow {
            country,
            counts,
            n_valid,
            percentages,
        });
    }
    table
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::crowd::Aggregated;
    use proptest::prelude::*;

    pub(crate) fn annotation(country: &str, mask: Option<&str>, valid: bool) -> AggregatedAnnotation {
        let mut values = vec![Aggregated::Null; 12];
        values[0] = Aggregated::Value("Yes".into());
        values[Question::MASKS.index()] = match mask {
            Some("UNRESOLVED") => Aggregated::Unresolved,
            Some(v) => Aggregated::Value(v.into()),
            None => Aggregated::Null,
        };
        AggregatedAnnotation {
            task_id: String::new(),
            post_id: String::new(),
            country: country.into(),
            values,
            location_valid: valid,
            contributing_workers: vec![],
        }
    }

    fn repeat(country: &str, mask: &str, n: usize) -> Vec<AggregatedAnnotation> {
        vec![annotation(country, Some(mask), true); n]
    }

    #[test]
    fn sixty_posts_split() {
        let mut a = repeat("IT", "Yes", 30);
        a.extend(repeat("IT", "Some of them", 18));
        a.extend(repeat("IT", "No", 12));
        a.extend(repeat("IT", "Cannot tell", 9));
        a.extend(repeat("IT", "UNRESOLVED", 4));
        a.push(annotation("IT", Some("Yes"), false));
        let t = compute_indicators(&a, Question::MASKS, 50);
        let row = t.row("IT").unwrap();
        assert_eq!(row.n_valid, 60);
        assert_eq!(row.pct("Yes"), 0.5);
        assert_eq!(row.pct("Some of them"), 0.3);
        assert_eq!(row.pct("No"), 0.2);
        assert_eq!(t.options, ["Yes", "Some of them", "No"]);
    }

    #[test]
    fn forty_nine_is_omitted() {
        let a = repeat("FR", "Yes", 49);
        let t = compute_indicators(&a, Question::MASKS, 50);
        assert!(t.rows.is_empty());
        assert_eq!(t.below_threshold["FR"], 49);
        assert!(compute_indicators(&[], Question::MASKS, 50).rows.is_empty());
    }

    fn arb_annotations() -> impl Strategy<Value = Vec<AggregatedAnnotation>> {
        let country = prop::sample::select(vec!["IT", "ES", "FR", "DE"]);
        let mask = prop::sample::select(vec!["Yes", "Some of them", "No", "Cannot tell", "UNRESOLVED"]);
        prop::collection::vec((country, mask, any::<bool>()), 0..300)
            .prop_map(|v| v.into_iter().map(|(c, m, ok)| annotation(c, Some(m), ok)).collect())
    }

    proptest! {
        #[test]
        fn rows_sum_to_one(a in arb_annotations(), threshold in 0usize..40) {
            let t = compute_indicators(&a, Question::MASKS, threshold);
            for row in &t.rows {
                let s: f64 = row.percentages.values().sum();
                prop_assert!((s - 1.0).abs() <= 1e-9);
                prop_assert!(row.n_valid >= threshold);
            }
        }

        #[test]
        fn raising_threshold_never_adds(a in arb_annotations(), t1 in 0usize..60, dt in 0usize..60) {
            let low = compute_indicators(&a, Question::MASKS, t1);
            let high = compute_indicators(&a, Question::MASKS, t1 + dt);
            for c in high.countries() {
                prop_assert!(low.row(c).is_some());
            }
        }

        #[test]
        fn split_counts_merge_to_whole(a in arb_annotations(), cut in 0usize..300) {
            let cut = cut.min(a.len());
            let whole = count_answers(&a, Question::MASKS);
            let parts = count_answers(&a[..cut], Question::MASKS).merge(count_answers(&a[cut..], Question::MASKS));
            prop_assert_eq!(whole, parts);
        }
    }
}
