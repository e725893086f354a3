use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MASS_TOLERANCE: f64 = 1e-6;

/// One country's answers to a five-point frequency question, as fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyRecord {
    pub country: String,
    pub period: String,
    pub not_at_all: f64,
    pub rarely: f64,
    pub sometimes: f64,
    pub frequently: f64,
    pub always: f64,
}

impl SurveyRecord {
    pub fn fractions(&self) -> [f64; 5] {
        [self.not_at_all, self.rarely, self.sometimes, self.frequently, self.always]
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.fractions();
        if f.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::contract(format!("{} {}: fraction outside [0, 1]", self.country, self.period)));
        }
        let sum: f64 = f.iter().sum();
        if (sum - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::contract(format!(
                "{} {}: fractions sum to {sum}",
                self.country, self.period
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurveyCategories {
    pub no: f64,
    pub sometimes: f64,
    pub yes: f64,
}

/// Not at all + Rarely → No; Sometimes → Sometimes; Frequently + Always → Yes.
pub fn map_survey(record: &SurveyRecord) -> Result<SurveyCategories> {
    record.validate()?;
    Ok(SurveyCategories {
        no: record.not_at_all + record.rarely,
        sometimes: record.sometimes,
        yes: record.frequently + record.always,
    })
}

/// CSV with header `country,period,not_at_all,rarely,sometimes,frequently,always`.
pub fn read_survey<R: Read>(source: R) -> Result<Vec<SurveyRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let mut rec: SurveyRecord = row?;
        rec.country = rec.country.to_ascii_uppercase();
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

pub fn load_survey(path: &Path) -> Result<Vec<SurveyRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_survey(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn rec(f: [f64; 5]) -> SurveyRecord {
        SurveyRecord {
            country: "IT".into(),
            period: "2020-05-13".into(),
            not_at_all: f[0],
            rarely: f[1],
            sometimes: f[2],
            frequently: f[3],
            always: f[4],
        }
    }

    #[test]
    fn mapping_examples() {
        let m = map_survey(&rec([0.1, 0.1, 0.2, 0.3, 0.3])).unwrap();
        assert!((m.no - 0.2).abs() < 1e-15 && m.sometimes == 0.2 && (m.yes - 0.6).abs() < 1e-15);
        let m = map_survey(&rec([1.0, 0.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!((m.no, m.sometimes, m.yes), (1.0, 0.0, 0.0));
        let m = map_survey(&rec([0.0, 0.0, 1.0, 0.0, 0.0])).unwrap();
        assert_eq!((m.no, m.sometimes, m.yes), (0.0, 1.0, 0.0));
    }

    #[test]
    fn bad_mass_rejected() {
        assert!(map_survey(&rec([0.5, 0.5, 0.5, 0.0, 0.0])).is_err());
        assert!(map_survey(&rec([-0.1, 0.1, 0.5, 0.5, 0.0])).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let text = "country,period,not_at_all,rarely,sometimes,frequently,always\nit, w20 ,0.1,0.1,0.2,0.3,0.3\n";
        let recs = read_survey(text.as_bytes()).unwrap();
        assert_eq!(recs[0].country, "IT");
        assert_eq!(recs[0].period, "w20");
        let bad = "country,period,not_at_all,rarely,sometimes,frequently,always\nIT,w,0.9,0.9,0,0,0\n";
        assert!(read_survey(bad.as_bytes()).is_err());
    }

    proptest! {
        // dyadic fractions add exactly, so mass is preserved bit for bit
        #[test]
        fn mass_preserved(parts in prop::collection::vec(0u32..=64, 5)) {
            let total: u32 = parts.iter().sum();
            prop_assume!(total > 0);
            let scale = 1024.0;
            let mut q: Vec<u32> = parts.iter().map(|p| p * 1024 / total).collect();
            let diff = 1024 - q.iter().sum::<u32>();
            q[4] += diff;
            let f: Vec<f64> = q.iter().map(|&v| v as f64 / scale).collect();
            let r = rec([f[0], f[1], f[2], f[3], f[4]]);
            let m = map_survey(&r).unwrap();
            prop_assert_eq!(m.no + m.sometimes + m.yes, f.iter().sum::<f64>());
        }
    }
}
