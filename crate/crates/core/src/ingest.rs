//! Crawl ingestion: JSON-lines parsing and crawl-eligibility filtering.
//!
//! A crawl file holds one post object per line. Lines that fail to parse or
//! violate the record invariants are skipped and tallied, never fatal.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::PathBuf;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let p = GeoPoint { lat, lon };
        if p.in_bounds() {
            Ok(p)
        } else {
            Err(Error::invalid(format!("coordinates out of bounds: ({lat}, {lon})")))
        }
    }

    pub fn in_bounds(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }
}

/// One crawled post carrying an image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostRecord {
    pub post_id: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_location: Option<String>,
    pub image_url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub native_geo: Option<GeoPoint>,
    #[serde(default)]
    pub is_retweet: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang: Option<String>,
}

impl PostRecord {
    pub fn validate(&self) -> std::result::Result<(), SkipReason> {
        if self.post_id.is_empty() {
            return Err(SkipReason::EmptyPostId);
        }
        if self.image_url.is_empty() {
            return Err(SkipReason::MissingImageUrl);
        }
        if let Some(geo) = &self.native_geo {
            if !geo.in_bounds() {
                return Err(SkipReason::GeoOutOfBounds);
            }
        }
        Ok(())
    }
}

/// Wire shape tolerant of a missing timestamp so it can be reported as its own reason.
#[derive(Deserialize)]
struct RawPost {
    post_id: String,
    text: String,
    created_at: Option<DateTime<Utc>>,
    #[serde(default)]
    user_location: Option<String>,
    image_url: String,
    #[serde(default)]
    image_path: Option<PathBuf>,
    #[serde(default)]
    native_geo: Option<GeoPoint>,
    #[serde(default)]
    is_retweet: bool,
    #[serde(default)]
    lang: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    MalformedJson,
    MissingCreatedAt,
    EmptyPostId,
    MissingImageUrl,
    GeoOutOfBounds,
    DuplicatePostId,
}

impl SkipReason {
    pub fn code(&self) -> &'static str {
        match self {
            SkipReason::MalformedJson => "malformed_json",
            SkipReason::MissingCreatedAt => "missing_created_at",
            SkipReason::EmptyPostId => "empty_post_id",
            SkipReason::MissingImageUrl => "missing_image_url",
            SkipReason::GeoOutOfBounds => "geo_out_of_bounds",
            SkipReason::DuplicatePostId => "duplicate_post_id",
        }
    }
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: SkipReason,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SkipReport {
    pub counts: BTreeMap<SkipReason, usize>,
    pub lines: Vec<SkippedLine>,
}

impl SkipReport {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn count(&self, reason: SkipReason) -> usize {
        self.counts.get(&reason).copied().unwrap_or(0)
    }

    fn push(&mut self, line: usize, reason: SkipReason, detail: impl Into<String>) {
        *self.counts.entry(reason).or_default() += 1;
        self.lines.push(SkippedLine {
            line,
            reason,
            detail: detail.into(),
        });
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParsedCrawl {
    pub records: Vec<PostRecord>,
    pub skipped: SkipReport,
}

/// Parses a JSON-lines crawl. Blank lines are ignored; bad lines are skipped
/// with a reason. Only a failure to read the stream itself is fatal.
pub fn parse_crawl<R: BufRead>(source: R) -> Result<ParsedCrawl> {
    let mut out = ParsedCrawl::default();
    let mut seen_ids = HashSet::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawPost = match serde_json::from_str(&line) {
            Ok(raw) => raw,
            Err(e) => {
                out.skipped.push(line_no, SkipReason::MalformedJson, e.to_string());
                continue;
            }
        };
        let Some(created_at) = raw.created_at else {
            out.skipped
                .push(line_no, SkipReason::MissingCreatedAt, raw.post_id);
            continue;
        };
        let record = PostRecord {
            post_id: raw.post_id,
            text: raw.text,
            created_at,
            user_location: raw.user_location,
            image_url: raw.image_url,
            image_path: raw.image_path,
            native_geo: raw.native_geo,
            is_retweet: raw.is_retweet,
            lang: raw.lang,
        };
        if let Err(reason) = record.validate() {
            out.skipped.push(line_no, reason, record.post_id);
            continue;
        }
        if !seen_ids.insert(record.post_id.clone()) {
            out.skipped
                .push(line_no, SkipReason::DuplicatePostId, record.post_id);
            continue;
        }
        out.records.push(record);
    }
    Ok(out)
}

pub fn write_jsonl<'a, W, T, I>(mut sink: W, items: I) -> Result<()>
where
    W: Write,
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    for item in items {
        serde_json::to_writer(&mut sink, item)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

/// Reads any JSON-lines file of `T`, failing on the first bad line.
pub fn read_jsonl<T, R>(source: R) -> Result<Vec<T>>
where
    T: serde::de::DeserializeOwned,
    R: BufRead,
{
    let mut out = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| Error::invalid(format!("line {}: {e}", idx + 1)))?;
        out.push(item);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrawlSpec {
    keywords: BTreeSet<String>,
    window: Option<(DateTime<Utc>, DateTime<Utc>)>,
}

impl CrawlSpec {
    pub fn new<I, S>(keywords: I, window: Option<(DateTime<Utc>, DateTime<Utc>)>) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let keywords: BTreeSet<String> = keywords
            .into_iter()
            .map(|k| k.as_ref().trim().to_lowercase())
            .filter(|k| !k.is_empty())
            .collect();
        if keywords.is_empty() {
            return Err(Error::invalid("crawl keywords must not be empty"));
        }
        if let Some((start, end)) = window {
            if start > end {
                return Err(Error::invalid("crawl window start is after end"));
            }
        }
        Ok(CrawlSpec { keywords, window })
    }

    pub fn keywords(&self) -> &BTreeSet<String> {
        &self.keywords
    }

    pub fn window(&self) -> Option<(DateTime<Utc>, DateTime<Utc>)> {
        self.window
    }

    pub fn admits(&self, record: &PostRecord) -> bool {
        if record.is_retweet || record.image_url.is_empty() {
            return false;
        }
        if let Some((start, end)) = self.window {
            if record.created_at < start || record.created_at > end {
                return false;
            }
        }
        let text = record.text.to_lowercase();
        self.keywords.iter().any(|k| text.contains(k.as_str()))
    }
}

/// Keeps non-retweets with an image whose text mentions a keyword, inside the window.
pub fn filter_crawl(records: &[PostRecord], spec: &CrawlSpec) -> Vec<PostRecord> {
    records.iter().filter(|r| spec.admits(r)).cloned().collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    pub(crate) fn post(id: &str, text: &str, secs: i64) -> PostRecord {
        PostRecord {
            post_id: id.to_string(),
            text: text.to_string(),
            created_at: Utc.timestamp_opt(1_589_248_926 + secs, 0).unwrap(),
            user_location: None,
            image_url: format!("https://img.example/{id}.jpg"),
            image_path: None,
            native_geo: None,
            is_retweet: false,
            lang: None,
        }
    }

    fn to_jsonl(records: &[PostRecord]) -> String {
        let mut buf = Vec::new();
        write_jsonl(&mut buf, records).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn parses_well_formed_lines_in_order() {
        let recs = vec![post("a", "covid", 0), post("b", "corona", 1), post("c", "flu", 2)];
        let parsed = parse_crawl(to_jsonl(&recs).as_bytes()).unwrap();
        assert_eq!(parsed.records, recs);
        assert_eq!(parsed.skipped.total(), 0);
    }

    #[test]
    fn truncated_line_is_skipped_not_fatal() {
        let recs = vec![post("a", "covid", 0), post("b", "corona", 1)];
        let mut text = to_jsonl(&recs);
        text.push_str("{\"post_id\": \"c\", \"text\": \"tru");
        let parsed = parse_crawl(text.as_bytes()).unwrap();
        assert_eq!(parsed.records.len(), 2);
        assert_eq!(parsed.skipped.count(SkipReason::MalformedJson), 1);
        assert_eq!(parsed.skipped.total(), 1);
    }

    #[test]
    fn empty_stream() {
        let parsed = parse_crawl("".as_bytes()).unwrap();
        assert!(parsed.records.is_empty());
        assert_eq!(parsed.skipped.total(), 0);
    }

    #[test]
    fn missing_timestamp_and_bad_records_get_reasons() {
        let text = concat!(
            "{\"post_id\":\"a\",\"text\":\"x\",\"image_url\":\"u\"}\n",
            "{\"post_id\":\"\",\"text\":\"x\",\"created_at\":\"2020-05-12T02:02:06Z\",\"image_url\":\"u\"}\n",
            "{\"post_id\":\"b\",\"text\":\"x\",\"created_at\":\"2020-05-12T02:02:06Z\",\"image_url\":\"\"}\n",
            "{\"post_id\":\"c\",\"text\":\"x\",\"created_at\":\"2020-05-12T02:02:06Z\",\"image_url\":\"u\",\"native_geo\":{\"lat\":91.0,\"lon\":0.0}}\n",
            "{\"post_id\":\"d\",\"text\":\"x\",\"created_at\":\"2020-05-12T02:02:06Z\",\"image_url\":\"u\"}\n",
            "{\"post_id\":\"d\",\"text\":\"y\",\"created_at\":\"2020-05-12T02:02:06Z\",\"image_url\":\"u\"}\n",
        );
        let parsed = parse_crawl(text.as_bytes()).unwrap();
        assert_eq!(parsed.records.len(), 1);
        let s = &parsed.skipped;
        assert_eq!(s.count(SkipReason::MissingCreatedAt), 1);
        assert_eq!(s.count(SkipReason::EmptyPostId), 1);
        assert_eq!(s.count(SkipReason::MissingImageUrl), 1);
        assert_eq!(s.count(SkipReason::GeoOutOfBounds), 1);
        assert_eq!(s.count(SkipReason::DuplicatePostId), 1);
        assert_eq!(s.lines[0].line, 1);
    }

    #[test]
    fn retweets_are_dropped() {
        let spec = CrawlSpec::new(["corona"], None).unwrap();
        let mut rt = post("a", "corona", 0);
        rt.is_retweet = true;
        assert!(filter_crawl(&[rt], &spec).is_empty());
    }

    #[test]
    fn keyword_match_is_case_insensitive() {
        let spec = CrawlSpec::new(["Corona"], None).unwrap();
        let kept = filter_crawl(&[post("a", "Corona update", 0), post("b", "weather", 0)], &spec);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].post_id, "a");
    }

    #[test]
    fn window_bounds_are_inclusive() {
        let start = post("x", "", 10).created_at;
        let end = post("x", "", 20).created_at;
        let spec = CrawlSpec::new(["covid"], Some((start, end))).unwrap();
        let recs = [
            post("early", "covid", 9),
            post("start", "covid", 10),
            post("end", "covid", 20),
            post("late", "covid", 21),
        ];
        let ids: Vec<_> = filter_crawl(&recs, &spec).into_iter().map(|r| r.post_id).collect();
        assert_eq!(ids, ["start", "end"]);
    }

    #[test]
    fn spec_rejects_bad_config() {
        assert!(CrawlSpec::new(Vec::<String>::new(), None).is_err());
        assert!(CrawlSpec::new([" "], None).is_err());
        let a = post("x", "", 10).created_at;
        let b = post("x", "", 0).created_at;
        assert!(CrawlSpec::new(["covid"], Some((a, b))).is_err());
    }

    fn arb_record() -> impl Strategy<Value = PostRecord> {
        (
            "[a-z0-9]{1,8}",
            "\\PC{0,40}",
            0i64..4_000_000_000,
            0u32..1_000_000_000,
            proptest::option::of("\\PC{0,12}"),
            proptest::option::of((-90.0f64..=90.0, -180.0f64..=180.0)),
            any::<bool>(),
            proptest::option::of("[a-z]{2}"),
        )
            .prop_map(|(id, text, secs, nanos, loc, geo, rt, lang)| PostRecord {
                image_url: format!("https://img/{id}"),
                image_path: Some(PathBuf::from(format!("{id}.png"))),
                post_id: id,
                text,
                created_at: Utc.timestamp_opt(secs, nanos).unwrap(),
                user_location: loc,
                native_geo: geo.map(|(lat, lon)| GeoPoint { lat, lon }),
                is_retweet: rt,
                lang,
            })
    }

    proptest! {
        #[test]
        fn jsonl_round_trips(recs in proptest::collection::vec(arb_record(), 0..20)) {
            let mut seen = HashSet::new();
            let recs: Vec<_> = recs.into_iter().filter(|r| seen.insert(r.post_id.clone())).collect();
            let parsed = parse_crawl(to_jsonl(&recs).as_bytes()).unwrap();
            prop_assert_eq!(parsed.skipped.total(), 0);
            prop_assert_eq!(parsed.records, recs);
        }

        #[test]
        fn filter_is_idempotent_and_sound(
            recs in proptest::collection::vec(arb_record(), 0..30),
            kw in "[a-z]{1,2}",
        ) {
            let spec = CrawlSpec::new([kw.as_str()], None).unwrap();
            let once = filter_crawl(&recs, &spec);
            prop_assert!(once.len() <= recs.len());
            prop_assert_eq!(filter_crawl(&once, &spec), once.clone());
            for r in &once {
                prop_assert!(!r.is_retweet);
                prop_assert!(r.text.to_lowercase().contains(&kw));
            }
        }
    }
}
