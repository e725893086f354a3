use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::survey::{map_survey, SurveyCategories, SurveyRecord};
use super::IndicatorTable;
use crate::crowd::schema::SOME_OF_THEM;
use crate::error::{Error, Result};

pub const NONE_IN_COMMON: &str = "none in common";

/// Product-moment correlation. Errors on fewer than two points, unequal
/// lengths or a constant series.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::UndefinedCorrelation(format!("series lengths {} and {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant series".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Yes,
    No,
    Sometimes,
}

impl Category {
    /// Answer option on the pipeline side.
    pub fn option(self) -> &'static str {
        match self {
            Category::Yes => "Yes",
            Category::No => "No",
            Category::Sometimes => SOME_OF_THEM,
        }
    }

    fn survey_value(self, c: &SurveyCategories) -> f64 {
        match self {
            Category::Yes => c.yes,
            Category::No => c.no,
            Category::Sometimes => c.sometimes,
        }
    }

    pub fn parse(s: &str) -> Option<Category> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yes" => Some(Category::Yes),
            "no" => Some(Category::No),
            "sometimes" | "some" | "some of them" => Some(Category::Sometimes),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryPair {
    pub country: String,
    pub pipeline_pct: f64,
    pub survey_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub question_id: String,
    pub category: Category,
    /// `None` when undefined; `reason` says why
    pub r: Option<f64>,
    pub n_common: usize,
    pub country_pairs: Vec<CountryPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Correlates pipeline percentages with mapped survey fractions over the
/// countries present in both. The survey must hold at most one record per
/// country (select a period first).
pub fn compare(table: &IndicatorTable, survey: &[SurveyRecord], categories: &[Category]) -> Result<Vec<CorrelationReport>> {
    let mut mapped: BTreeMap<&str, SurveyCategories> = BTreeMap::new();
    for rec in survey {
        if mapped.insert(rec.country.as_str(), map_survey(rec)?).is_some() {
            return Err(Error::contract(format!(
                "survey has several records for {}; select one period",
                rec.country
            )));
        }
    }
    let mut reports = Vec::with_capacity(categories.len());
    for &category in categories {
        let pairs: Vec<CountryPair> = table
            .rows
            .iter()
            .filter_map(|row| {
                let s = mapped.get(row.country.as_str())?;
                Some(CountryPair {
                    country: row.country.clone(),
                    pipeline_pct: row.pct(category.option()),
                    survey_pct: category.survey_value(s),
                })
            })
            .collect();
        let (r, reason) = if pairs.is_empty() {
            (None, Some(NONE_IN_COMMON.to_string()))
        } else {
            let x: Vec<f64> = pairs.iter().map(|p| p.pipeline_pct).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.survey_pct).collect();
            match pearson(&x, &y) {
                Ok(r) => (Some(r), None),
                Err(Error::UndefinedCorrelation(why)) => (None, Some(why)),
                Err(e) => return Err(e),
            }
        };
        reports.push(CorrelationReport {
            question_id: table.question_id.clone(),
            category,
            r,
            n_common: pairs.len(),
            country_pairs: pairs,
            reason,
        });
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn trivial_series() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        // dx = (-1.5, -.5, .5, 1.5), dy = (-1.5, .5, -.5, 1.5): 4 / sqrt(5 * 5)
        assert!((pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn undefined_cases() {
        assert!(matches!(pearson(&[1.0], &[2.0]), Err(Error::UndefinedCorrelation(_))));
        assert!(matches!(pearson(&[1.0, 1.0], &[2.0, 3.0]), Err(Error::UndefinedCorrelation(_))));
        assert!(matches!(pearson(&[1.0, 2.0], &[2.0]), Err(Error::UndefinedCorrelation(_))));
    }

    fn series() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, 3..30)
    }

    proptest! {
        #[test]
        fn affine_invariance(x in series(), a in 0.1f64..10.0, b in -50.0f64..50.0) {
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let z: Vec<f64> = x.iter().map(|v| -a * v + b).collect();
            if let Ok(r) = pearson(&x, &y) {
                prop_assert!((r - 1.0).abs() <= 1e-12);
                prop_assert!((pearson(&x, &z).unwrap() + 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn symmetric(x in series(), seed in any::<u64>()) {
            let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v.sin() + ((seed >> (i % 60)) & 1) as f64).collect();
            if let (Ok(a), Ok(b)) = (pearson(&x, &y), pearson(&y, &x)) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
