//! End-to-end batch run: ingest → dedup → filter chain → geocode → tasks,
//! with the per-stage funnel.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::boundaries::CountryBoundaries;
use crate::crowd::{create_tasks, AggregatedAnnotation, Task, TaskStore, DEFAULT_REDUNDANCY};
use crate::dedup::dedup;
use crate::error::{Error, Result};
use crate::filter::{
    build_chain, load_chain_config, optimize_order, profile_filters, run_chain, ErrorPolicy, FilterPlugin, StageStats,
};
use crate::geocode::{Gazetteer, GeoResolution, Geocoder};
use crate::imaging::DirImageSource;
use crate::ingest::{filter_crawl, parse_crawl, CrawlSpec, PostRecord, SkipReport};

fn default_redundancy() -> u32 {
    DEFAULT_REDUNDANCY
}

fn default_profile_sample() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// crawl dump, one JSON post per line
    pub input: PathBuf,
    /// root that relative `image_path`s resolve against
    #[serde(default)]
    pub images: Option<PathBuf>,
    pub keywords: Vec<String>,
    #[serde(default)]
    pub window_start: Option<DateTime<Utc>>,
    #[serde(default)]
    pub window_end: Option<DateTime<Utc>>,
    #[serde(default)]
    pub phash_threshold: u32,
    /// filter chain config; relative label paths resolve against its directory
    #[serde(default)]
    pub chain: Option<PathBuf>,
    #[serde(default)]
    pub optimize_order: bool,
    #[serde(default = "default_profile_sample")]
    pub profile_sample: usize,
    #[serde(default)]
    pub error_policy: ErrorPolicy,
    pub gazetteer: PathBuf,
    #[serde(default)]
    pub boundaries: Option<PathBuf>,
    #[serde(default)]
    pub geocode_seed: u64,
    #[serde(default = "default_redundancy")]
    pub redundancy: u32,
}

impl PipelineConfig {
    pub fn new(input: impl Into<PathBuf>, gazetteer: impl Into<PathBuf>, keywords: &[&str]) -> Self {
        PipelineConfig {
            input: input.into(),
            images: None,
            keywords: keywords.iter().map(|k| k.to_string()).collect(),
            window_start: None,
            window_end: None,
            phash_threshold: 0,
            chain: None,
            optimize_order: false,
            profile_sample: default_profile_sample(),
            error_policy: ErrorPolicy::Drop,
            gazetteer: gazetteer.into(),
            boundaries: None,
            geocode_seed: 0,
            redundancy: DEFAULT_REDUNDANCY,
        }
    }

    pub fn window(&self) -> Result<Option<(DateTime<Utc>, DateTime<Utc>)>> {
        match (self.window_start, self.window_end) {
            (None, None) => Ok(None),
            (Some(s), Some(e)) => Ok(Some((s, e))),
            _ => Err(Error::invalid("window_start and window_end go together")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Dedup,
    Filter,
    Geocode,
    Tasks,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Ingest => "ingest",
            Stage::Dedup => "dedup",
            Stage::Filter => "filter",
            Stage::Geocode => "geocode",
            Stage::Tasks => "tasks",
        };
        f.write_str(s)
    }
}

/// Record counts after each phase. The crowd rows stay empty until
/// aggregation results are folded in with [`FunnelReport::fill_crowd`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FunnelReport {
    pub input: usize,
    pub skipped: usize,
    pub crawled: usize,
    pub url_duplicates: usize,
    pub phash_duplicates: usize,
    pub decode_failures: usize,
    pub after_dedup: usize,
    pub filter_order: Vec<String>,
    pub filter_stages: Vec<StageStats>,
    pub after_filtering: usize,
    pub unresolved: usize,
    pub native_located: usize,
    pub after_geolocating: usize,
    pub tasks_created: usize,
    pub annotated: Option<usize>,
    pub location_validated: Option<usize>,
    #[serde(default)]
    pub seconds: BTreeMap<String, f64>,
}

fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

impl FunnelReport {
    pub fn fill_crowd(&mut self, aggregated: &[AggregatedAnnotation]) {
        self.annotated = Some(aggregated.len());
        self.location_validated = Some(aggregated.iter().filter(|a| a.location_valid).count());
    }

    /// The five headline phases.
    pub fn phases(&self) -> [(&'static str, Option<usize>); 5] {
        [
            ("Crawled", Some(self.crawled)),
            ("After filtering", Some(self.after_filtering)),
            ("After geolocating", Some(self.after_geolocating)),
            ("Annotated", self.annotated),
            ("Location-validated", self.location_validated),
        ]
    }

    pub fn render_table(&self) -> String {
        let rows: Vec<(&str, String)> = self
            .phases()
            .iter()
            .map(|(name, n)| (*name, n.map_or_else(|| "-".to_string(), thousands)))
            .collect();
        let w_name = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max("Phase".len());
        let w_num = rows.iter().map(|r| r.1.len()).max().unwrap_or(0).max("Tweets".len());
        let mut out = format!("{:<w_name$}  {:>w_num$}\n", "Phase", "Tweets");
        for (name, n) in rows {
            out.push_str(&format!("{name:<w_name$}  {n:>w_num$}\n"));
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Error,
    pub partial: Box<FunnelReport>,
}

#[derive(Debug, Clone, Default)]
pub struct PipelineOutput {
    pub funnel: FunnelReport,
    pub skip_report: SkipReport,
    pub located: Vec<(PostRecord, GeoResolution)>,
    pub tasks: Vec<Task>,
}

struct Run {
    funnel: FunnelReport,
}

impl Run {
    fn stage<T>(&mut self, stage: Stage, f: impl FnOnce(&mut FunnelReport) -> Result<T>) -> std::result::Result<T, PipelineError> {
        let start = Instant::now();
        let out = f(&mut self.funnel);
        self.funnel.seconds.insert(stage.to_string(), start.elapsed().as_secs_f64());
        out.map_err(|source| PipelineError {
            stage,
            source,
            partial: Box::new(self.funnel.clone()),
        })
    }
}

fn open_reader(path: &Path) -> Result<BufReader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file))
}

/// Runs every batch stage. On failure the error names the stage and carries
/// the counts gathered so far.
pub fn pipeline_run(config: &PipelineConfig) -> std::result::Result<PipelineOutput, PipelineError> {
    let mut run = Run {
        funnel: FunnelReport::default(),
    };
    let (crawled, skip_report) = run.stage(Stage::Ingest, |f| {
        let parsed = parse_crawl(open_reader(&config.input)?)?;
        let spec = CrawlSpec::new(&config.keywords, config.window()?)?;
        let crawled = filter_crawl(&parsed.records, &spec);
        f.input = parsed.records.len() + parsed.skipped.total();
        f.skipped = parsed.skipped.total();
        f.crawled = crawled.len();
        Ok((crawled, parsed.skipped))
    })?;

    let image_root = config.images.clone().unwrap_or_else(|| PathBuf::from("."));
    let deduped = run.stage(Stage::Dedup, |f| {
        let (kept, report) = dedup(&crawled, &DirImageSource::new(&image_root), config.phash_threshold);
        f.url_duplicates = report.url_duplicates_removed;
        f.phash_duplicates = report.phash_duplicates_removed;
        f.decode_failures = report.decode_failures;
        f.after_dedup = report.output_count;
        Ok(kept)
    })?;

    let filtered = run.stage(Stage::Filter, |f| {
        let Some(chain_path) = &config.chain else {
            f.after_filtering = deduped.len();
            return Ok(deduped.clone());
        };
        let specs = load_chain_config(chain_path)?;
        let base = chain_path.parent().unwrap_or(Path::new("."));
        let mut chain: Vec<Box<dyn FilterPlugin>> = build_chain(&specs, base)?;
        if config.optimize_order && !deduped.is_empty() {
            let sample = &deduped[..config.profile_sample.clamp(1, deduped.len())];
            let profiles = profile_filters(sample, &chain, Some(&image_root))?;
            let order = optimize_order(&profiles);
            chain.sort_by_key(|p| order.iter().position(|n| n == p.name()));
        }
        f.filter_order = chain.iter().map(|p| p.name().to_string()).collect();
        let outcome = run_chain(&deduped, &chain, Some(&image_root), config.error_policy)?;
        f.filter_stages = outcome.stages;
        f.after_filtering = outcome.kept.len();
        Ok(outcome.kept)
    })?;

    let located = run.stage(Stage::Geocode, |f| {
        let gazetteer = Gazetteer::load(&config.gazetteer)?;
        let boundaries = config.boundaries.as_deref().map(CountryBoundaries::load).transpose()?;
        let mut geocoder = Geocoder::new(&gazetteer, config.geocode_seed);
        if let Some(b) = &boundaries {
            geocoder = geocoder.with_boundaries(b);
        }
        let outcome = geocoder.resolve_all(&filtered)?;
        f.native_located = outcome.native_count();
        f.unresolved = outcome.unresolved.len();
        f.after_geolocating = outcome.resolved.len();
        Ok(outcome.resolved)
    })?;

    let tasks = run.stage(Stage::Tasks, |f| {
        let tasks = create_tasks(located.iter().map(|(r, g)| (r, Some(g))), config.redundancy)?;
        f.tasks_created = tasks.len();
        Ok(tasks)
    })?;

    Ok(PipelineOutput {
        funnel: run.funnel,
        skip_report,
        located,
        tasks,
    })
}

/// Adds the run's tasks to a store and returns how many were new.
pub fn publish_tasks(store: &mut TaskStore, output: &PipelineOutput) -> Result<usize> {
    store.add_tasks(output.tasks.iter().cloned())
}

/// Headline counts of the original Twitter study; only used to check report
/// formatting, nothing here can reproduce them.
pub fn reference_funnel() -> FunnelReport {
    FunnelReport {
        crawled: 470_255,
        after_filtering: 42_978,
        after_geolocating: 25_541,
        annotated: Some(2_461),
        location_validated: Some(2_061),
        ..Default::default()
    }
}
