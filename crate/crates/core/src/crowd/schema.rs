//! The twelve-question annotation form and its skip logic.
//!
//! Guards:
//! - q2..q12 are asked only when q1 = Yes
//! - q4..q8 additionally need q3 = Yes
//! - q5, q6 additionally need q4 in {Yes, Some of them}
//! - q10 additionally needs q9 = Yes
//!
//! A question is *visible* when all its guards hold. Visible questions must be
//! answered; hidden ones must be null.

use std::fmt;

use serde::{Deserialize, Serialize};

pub const QUESTION_COUNT: usize = 12;

pub const YES: &str = "Yes";
pub const SURELY_NOT: &str = "Surely not";
pub const SOME_OF_THEM: &str = "Some of them";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Question(usize);

pub struct QuestionSpec {
    pub id: &'static str,
    pub text: &'static str,
    pub options: &'static [&'static str],
}

pub const QUESTIONS: [QuestionSpec; QUESTION_COUNT] = [
    QuestionSpec {
        id: "q1",
        text: "Is this a photo (rather than a cartoon, graph, meme, etc.)?",
        options: &["Yes", "No", "Not Sure"],
    },
    QuestionSpec {
        id: "q2",
        text: "Does it look like it has been taken recently (in the last three months)?",
        options: &["Yes", "No", "Cannot tell"],
    },
    QuestionSpec {
        id: "q3",
        text: "Are there people in this image?",
        options: &["Yes", "No", "Not Sure"],
    },
    QuestionSpec {
        id: "q4",
        text: "Are the people wearing masks?",
        options: &["Yes", "Some of them", "No", "Cannot tell"],
    },
    QuestionSpec {
        id: "q5",
        text: "If so, which type?",
        options: &["Scarf", "Cloth", "Surgical", "FP2", "FP3", "Gas mask", "Other", "Cannot tell"],
    },
    QuestionSpec {
        id: "q6",
        text: "Are the people wearing the mask correctly?",
        options: &["Yes", "No", "Only some of them", "Cannot tell", "Not sure"],
    },
    QuestionSpec {
        id: "q7",
        text: "How many people are there in the image?",
        options: &["1", "2", "3", "4", "5 or more"],
    },
    QuestionSpec {
        id: "q8",
        text: "Are they respecting social distance?",
        options: &["Yes", "No", "Cannot tell"],
    },
    QuestionSpec {
        id: "q9",
        text: "Are they in a public place (shops, outdoors, ...)?",
        options: &["Yes", "No", "Not sure"],
    },
    QuestionSpec {
        id: "q10",
        text: "If they are in a public place, what type?",
        options: &["street/square", "park", "shop", "hospital", "outdoors", "other", "cannot tell"],
    },
    QuestionSpec {
        id: "q11",
        text: "What are the people doing?",
        options: &[
            "socializing", "exercizing", "shopping", "queuing", "volunteering", "protesting", "working",
            "other", "cannot tell",
        ],
    },
    QuestionSpec {
        id: "q12",
        text: "We have associated a country or territory with this image. Do you think the picture was likely taken in this location?",
        options: &["Yes", "Maybe", "Surely not", "Cannot tell"],
    },
];

impl Question {
    pub const PHOTO: Question = Question(0);
    pub const PEOPLE: Question = Question(2);
    pub const MASKS: Question = Question(3);
    pub const PUBLIC_PLACE: Question = Question(8);
    pub const LOCATION: Question = Question(11);

    pub fn all() -> impl Iterator<Item = Question> {
        (0..QUESTION_COUNT).map(Question)
    }

    /// 1-based number, as in `q4`.
    pub fn number(n: usize) -> Option<Question> {
        (1..=QUESTION_COUNT).contains(&n).then(|| Question(n - 1))
    }

    pub fn parse(id: &str) -> Option<Question> {
        let id = id.trim().to_ascii_lowercase();
        let digits = id.strip_prefix('q').unwrap_or(&id);
        Question::number(digits.parse().ok()?)
    }

    pub fn index(self) -> usize {
        self.0
    }

    pub fn spec(self) -> &'static QuestionSpec {
        &QUESTIONS[self.0]
    }

    pub fn id(self) -> &'static str {
        self.spec().id
    }

    pub fn options(self) -> &'static [&'static str] {
        self.spec().options
    }

    pub fn canonical(self, value: &str) -> Option<&'static str> {
        self.options().iter().copied().find(|o| *o == value)
    }

    /// Options counted when turning answers into indicators: everything but the
    /// "cannot tell" / "not sure" family.
    pub fn substantive_options(self) -> Vec<&'static str> {
        self.options()
            .iter()
            .copied()
            .filter(|o| !is_indeterminate(o))
            .collect()
    }
}

impl fmt::Display for Question {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

pub fn is_indeterminate(option: &str) -> bool {
    let o = option.to_ascii_lowercase();
    o == "cannot tell" || o == "not sure"
}

/// A guard: `question` must hold one of `allowed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Guard {
    pub question: Question,
    pub allowed: &'static [&'static str],
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} in {{{}}}", self.question, self.allowed.join(", "))
    }
}

const Q1_YES: Guard = Guard {
    question: Question(0),
    allowed: &["Yes"],
};
const Q3_YES: Guard = Guard {
    question: Question(2),
    allowed: &["Yes"],
};
const Q4_MASKS: Guard = Guard {
    question: Question(3),
    allowed: &["Yes", "Some of them"],
};
const Q9_YES: Guard = Guard {
    question: Question(8),
    allowed: &["Yes"],
};

/// Guards for a question, outermost first.
pub fn guards(q: Question) -> &'static [Guard] {
    match q.0 {
        0 => &[],
        3 | 6 | 7 => &[Q1_YES, Q3_YES],
        4 | 5 => &[Q1_YES, Q3_YES, Q4_MASKS],
        9 => &[Q1_YES, Q9_YES],
        _ => &[Q1_YES],
    }
}

/// One value (or null) per question.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct AnswerSheet {
    values: [Option<String>; QUESTION_COUNT],
}

impl AnswerSheet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, q: Question) -> Option<&str> {
        self.values[q.0].as_deref()
    }

    pub fn set(&mut self, q: Question, value: Option<&str>) {
        self.values[q.0] = value.map(str::to_string);
    }

    pub fn with(mut self, q: Question, value: &str) -> Self {
        self.set(q, Some(value));
        self
    }

    pub fn failed_guard(&self, q: Question) -> Option<Guard> {
        guards(q)
            .iter()
            .copied()
            .find(|g| !self.get(g.question).is_some_and(|v| g.allowed.contains(&v)))
    }

    pub fn visible(&self, q: Question) -> bool {
        self.failed_guard(q).is_none()
    }

    /// Nulls every question whose guards no longer hold.
    pub fn clear_hidden(&mut self) {
        for q in Question::all() {
            if !self.visible(q) {
                self.values[q.0] = None;
            }
        }
    }

    pub fn validate(&self) -> Result<(), Vec<FieldError>> {
        let mut errors = Vec::new();
        for q in Question::all() {
            let value = self.get(q);
            if let Some(v) = value {
                if q.canonical(v).is_none() {
                    errors.push(FieldError {
                        field: q.id().to_string(),
                        problem: Problem::InvalidOption { value: v.to_string() },
                    });
                    continue;
                }
            }
            match (value, self.failed_guard(q)) {
                (Some(_), Some(g)) => errors.push(FieldError {
                    field: q.id().to_string(),
                    problem: Problem::GuardViolation { guard: g.to_string() },
                }),
                (None, None) => errors.push(FieldError {
                    field: q.id().to_string(),
                    problem: Problem::Missing,
                }),
                _ => {}
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Problem {
    InvalidOption { value: String },
    GuardViolation { guard: String },
    Missing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    #[serde(flatten)]
    pub problem: Problem,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.problem {
            Problem::InvalidOption { value } => write!(f, "{}: `{value}` is not an option", self.field),
            Problem::GuardViolation { guard } => {
                write!(f, "{}: must be null unless {guard}", self.field)
            }
            Problem::Missing => write!(f, "{}: answer required", self.field),
        }
    }
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SheetWire {
    #[serde(default)]
    q1: Option<String>,
    #[serde(default)]
    q2: Option<String>,
    #[serde(default)]
    q3: Option<String>,
    #[serde(default)]
    q4: Option<String>,
    #[serde(default)]
    q5: Option<String>,
    #[serde(default)]
    q6: Option<String>,
    #[serde(default)]
    q7: Option<String>,
    #[serde(default)]
    q8: Option<String>,
    #[serde(default)]
    q9: Option<String>,
    #[serde(default)]
    q10: Option<String>,
    #[serde(default)]
    q11: Option<String>,
    #[serde(default)]
    q12: Option<String>,
}

impl Serialize for AnswerSheet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let [q1, q2, q3, q4, q5, q6, q7, q8, q9, q10, q11, q12] = self.values.clone();
        SheetWire {
            q1,
            q2,
            q3,
            q4,
            q5,
            q6,
            q7,
            q8,
            q9,
            q10,
            q11,
            q12,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for AnswerSheet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let w = SheetWire::deserialize(d)?;
        Ok(AnswerSheet {
            values: [
                w.q1, w.q2, w.q3, w.q4, w.q5, w.q6, w.q7, w.q8, w.q9, w.q10, w.q11, w.q12,
            ],
        })
    }
}

/// Every sheet reachable by answering visible questions in order, i.e. the
/// full guard tree. Used by tests and the UI conformance check.
pub fn enumerate_sheets() -> Vec<AnswerSheet> {
    fn walk(q: usize, sheet: &mut AnswerSheet, out: &mut Vec<AnswerSheet>) {
        if q == QUESTION_COUNT {
            out.push(sheet.clone());
            return;
        }
        let question = Question(q);
        if !sheet.visible(question) {
            walk(q + 1, sheet, out);
            return;
        }
        for opt in question.options() {
            sheet.set(question, Some(opt));
            walk(q + 1, sheet, out);
        }
        sheet.set(question, None);
    }
    let mut out = Vec::new();
    walk(0, &mut AnswerSheet::new(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_yes() -> AnswerSheet {
        let mut s = AnswerSheet::new();
        for q in Question::all() {
            s.set(q, Some(q.options()[0]));
        }
        s
    }

    #[test]
    fn option_counts() {
        let counts: Vec<_> = Question::all().map(|q| q.options().len()).collect();
        assert_eq!(counts, [3, 3, 3, 4, 8, 5, 5, 3, 3, 7, 9, 4]);
    }

    #[test]
    fn not_a_photo_needs_nothing_else() {
        let s = AnswerSheet::new().with(Question::PHOTO, "No");
        assert_eq!(s.validate(), Ok(()));
    }

    #[test]
    fn guard_violation_names_guard() {
        let s = AnswerSheet::new()
            .with(Question::PHOTO, "No")
            .with(Question::MASKS, "Yes");
        let errs = s.validate().unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].field, "q4");
        assert_eq!(
            errs[0].problem,
            Problem::GuardViolation {
                guard: "q1 in {Yes}".into()
            }
        );
    }

    #[test]
    fn unknown_option_rejected() {
        let mut s = full_yes();
        s.set(Question::MASKS, Some("Maybe"));
        let errs = s.validate().unwrap_err();
        assert_eq!(errs[0].field, "q4");
        assert!(matches!(errs[0].problem, Problem::InvalidOption { .. }));
    }

    #[test]
    fn full_yes_sheet_valid_and_missing_detected() {
        assert_eq!(full_yes().validate(), Ok(()));
        let mut s = full_yes();
        s.set(Question::LOCATION, None);
        let errs = s.validate().unwrap_err();
        assert_eq!(errs[0].problem, Problem::Missing);
    }

    #[test]
    fn mask_no_hides_type_and_fit() {
        let mut s = full_yes();
        s.set(Question::MASKS, Some("No"));
        assert!(!s.visible(Question(4)));
        assert!(!s.visible(Question(5)));
        assert!(s.validate().is_err());
        s.clear_hidden();
        assert_eq!(s.validate(), Ok(()));
        assert_eq!(s.get(Question(4)), None);
    }

    #[test]
    fn every_reachable_sheet_is_valid() {
        let sheets = enumerate_sheets();
        assert!(sheets.len() > 1000);
        for s in &sheets {
            assert_eq!(s.validate(), Ok(()), "{s:?}");
        }
        let no_photo: Vec<_> = sheets.iter().filter(|s| s.get(Question::PHOTO) == Some("No")).collect();
        assert_eq!(no_photo.len(), 1);
        assert!(Question::all().skip(1).all(|q| no_photo[0].get(q).is_none()));
    }

    #[test]
    fn wire_format() {
        let s = AnswerSheet::new().with(Question::PHOTO, "No");
        let json = serde_json::to_value(&s).unwrap();
        assert_eq!(json["q1"], "No");
        assert!(json["q12"].is_null());
        assert_eq!(json.as_object().unwrap().len(), 12);
        let back: AnswerSheet = serde_json::from_value(json).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<AnswerSheet>(r#"{"q13": "Yes"}"#).is_err());
        let partial: AnswerSheet = serde_json::from_str(r#"{"q1": "No"}"#).unwrap();
        assert_eq!(partial, s);
    }

    #[test]
    fn question_parsing() {
        assert_eq!(Question::parse("q4"), Some(Question::MASKS));
        assert_eq!(Question::parse("Q12"), Some(Question::LOCATION));
        assert_eq!(Question::parse("4"), Some(Question::MASKS));
        assert_eq!(Question::parse("q0"), None);
        assert_eq!(Question::parse("q13"), None);
        assert_eq!(Question::MASKS.substantive_options(), ["Yes", "Some of them", "No"]);
    }
}
