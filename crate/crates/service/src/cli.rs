//! `sensepipe` subcommands.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use sensepipe_core::boundaries::CountryBoundaries;
use sensepipe_core::crowd::schema::Question;
use sensepipe_core::crowd::{create_tasks, AggregatedAnnotation, AnswerSheet, Task, TaskStore, VetoMode, DEFAULT_REDUNDANCY};
use sensepipe_core::dedup::dedup;
use sensepipe_core::filter::{build_chain, load_chain_config, optimize_order, profile_filters, run_chain, ErrorPolicy};
use sensepipe_core::geocode::{Gazetteer, GeoResolution, Geocoder, UnresolvedReason};
use sensepipe_core::imaging::DirImageSource;
use sensepipe_core::indicators::{compare, compute_indicators, export_choropleth, load_survey, Category, IndicatorTable, DEFAULT_MIN_POSTS};
use sensepipe_core::ingest::{filter_crawl, parse_crawl, read_jsonl, write_jsonl, CrawlSpec, PostRecord};
use sensepipe_core::pipeline::{pipeline_run, publish_tasks, PipelineConfig};
use sensepipe_core::simcrowd::{run_simulation, SimWorkerConfig};
use sensepipe_core::synth::{CorpusConfig, SyntheticCorpus, TruthRecord};

use crate::api::{self, ApiOptions, AppState};
use crate::client::HttpEndpoint;
use crate::config::{Config, DEFAULT_ADDR};

pub type CliResult<T = ()> = Result<T, Box<dyn std::error::Error>>;

#[derive(Debug, Parser)]
#[command(name = "sensepipe", version, about = "Image-based social sensing pipeline")]
pub struct Cli {
    /// TOML or JSON config file; flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// task store directory (also SENSEPIPE_DATA_DIR)
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a crawl file and keep eligible posts
    Ingest(IngestArgs),
    /// Drop URL and perceptual-hash duplicates
    Dedup(DedupArgs),
    /// Run the relevance filter chain
    Filter(FilterArgs),
    /// Assign a country to each post
    Geocode(GeocodeArgs),
    /// Manage crowd tasks in the store
    Tasks {
        #[command(subcommand)]
        command: TasksCommand,
    },
    /// Serve the task API and annotator UI
    Serve(ServeArgs),
    /// Aggregate completed tasks (same as `tasks aggregate`)
    Aggregate(AggregateArgs),
    /// Per-country indicators, survey comparison and map export
    Indicators {
        #[command(subcommand)]
        command: IndicatorsCommand,
    },
    /// Answer tasks with simulated workers
    Simulate(SimulateArgs),
    /// Run ingest through task creation and publish the tasks
    Run(RunArgs),
    /// Write a synthetic corpus with planted ground truth
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct Output {
    /// write here instead of standard output
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// comma-separated
    #[arg(long, value_delimiter = ',')]
    pub keywords: Vec<String>,
    #[arg(long)]
    pub from: Option<DateTime<Utc>>,
    #[arg(long)]
    pub to: Option<DateTime<Utc>>,
    #[command(flatten)]
    pub out: Output,
}

#[derive(Debug, Args)]
pub struct DedupArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<u32>,
    /// DedupReport JSON goes here (standard error otherwise)
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub out: Output,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub chain: Option<PathBuf>,
    #[arg(long)]
    pub optimize_order: bool,
    #[arg(long)]
    pub profile_sample: Option<usize>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub out: Output,
}

#[derive(Debug, Args)]
pub struct GeocodeArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub gazetteer: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// GeoJSON country boundaries for native coordinates
    #[arg(long)]
    pub boundaries: Option<PathBuf>,
    #[command(flatten)]
    pub out: Output,
}

#[derive(Debug, Subcommand)]
pub enum TasksCommand {
    /// Create tasks from geocoded posts and add them to the store
    Create {
        /// output of `geocode`
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        redundancy: Option<u32>,
    },
    /// Open/complete/answer counts
    Status,
    /// Dump every task as JSON lines
    List {
        #[command(flatten)]
        out: Output,
    },
    Aggregate(AggregateArgs),
    /// Write a snapshot next to the event log
    Snapshot,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[arg(long, value_parser = parse_veto)]
    pub veto: Option<VetoMode>,
    #[command(flatten)]
    pub out: Output,
}

fn parse_veto(s: &str) -> Result<VetoMode, String> {
    match s {
        "any" => Ok(VetoMode::Any),
        "majority" => Ok(VetoMode::Majority),
        _ => Err(format!("`{s}`: expected any or majority")),
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub addr: Option<String>,
    /// annotator UI bundle
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
    /// task image root, served under /images
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub snapshot_every: Option<u64>,
}

#[derive(Debug, Args)]
pub struct Source {
    /// aggregated annotations (JSON lines); the store is used otherwise
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub question: Option<String>,
    #[arg(long)]
    pub threshold: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum IndicatorsCommand {
    Compute {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        out: Output,
    },
    Compare {
        #[command(flatten)]
        source: Source,
        /// CSV: country,period,not_at_all,rarely,sometimes,frequently,always
        #[arg(long)]
        survey: Option<PathBuf>,
        /// keep only survey rows of this period
        #[arg(long)]
        period: Option<String>,
        /// comma-separated among yes, no, sometimes
        #[arg(long, value_delimiter = ',', default_value = "yes,no")]
        categories: Vec<String>,
        #[command(flatten)]
        out: Output,
    },
    Export {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        boundaries: Option<PathBuf>,
        #[arg(long, default_value = "indicators")]
        stem: String,
    },
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// tasks to publish first (direct mode) or to check truth coverage (HTTP mode)
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    /// ground truth, one {post_id, answers} per line
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub workers: usize,
    #[arg(long, default_value_t = 1.0)]
    pub accuracy: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// base URL of a running service
    #[arg(long)]
    pub target: Option<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub keywords: Vec<String>,
    #[arg(long)]
    pub chain: Option<PathBuf>,
    #[arg(long)]
    pub gazetteer: Option<PathBuf>,
    #[arg(long)]
    pub optimize_order: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// funnel report JSON
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub records: usize,
    #[arg(long, default_value_t = 2020)]
    pub seed: u64,
}

/// One line of `geocode` output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocatedPost {
    pub record: PostRecord,
    pub resolution: GeoResolution,
}

#[derive(Debug, Serialize)]
struct UnresolvedLine<'a> {
    post_id: &'a str,
    reason: UnresolvedReason,
}

fn required<T>(v: Option<T>, what: &str) -> CliResult<T> {
    v.ok_or_else(|| format!("--{what} is required (flag or config file)").into())
}

fn sink(out: &Output) -> CliResult<Box<dyn Write>> {
    Ok(match &out.output {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| format!("{}: {e}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn reader(path: &Path) -> CliResult<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| format!("{}: {e}", path.display()))?))
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    Ok(read_jsonl(reader(path)?).map_err(|e| format!("{}: {e}", path.display()))?)
}

fn write_json(path: Option<&Path>, value: &impl Serialize) -> CliResult {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => eprintln!("{text}"),
    }
    Ok(())
}

fn print_json(out: &Output, value: &impl Serialize) -> CliResult {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn keywords(flag: Vec<String>, cfg: &Config) -> Vec<String> {
    if flag.is_empty() {
        cfg.keywords.clone().unwrap_or_default()
    } else {
        flag
    }
}

pub fn run(cli: Cli) -> CliResult {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let data_dir = cfg.data_dir(cli.data_dir.as_deref());
    let open_store = || -> CliResult<TaskStore> { Ok(TaskStore::open(&data_dir, cfg.sync.unwrap_or(false))?) };
    match cli.command {
        Command::Ingest(a) => {
            let input = required(a.input.or(cfg.input.clone()), "input")?;
            let parsed = parse_crawl(reader(&input)?)?;
            let window = match (a.from.or(cfg.from), a.to.or(cfg.to)) {
                (Some(s), Some(e)) => Some((s, e)),
                (None, None) => None,
                _ => return Err("--from and --to go together".into()),
            };
            let spec = CrawlSpec::new(keywords(a.keywords, &cfg), window)?;
            let kept = filter_crawl(&parsed.records, &spec);
            write_jsonl(sink(&a.out)?, &kept)?;
            eprintln!("{}", serde_json::to_string_pretty(&parsed.skipped)?);
            eprintln!("kept {} of {} parsed posts", kept.len(), parsed.records.len());
        }
        Command::Dedup(a) => {
            let records: Vec<PostRecord> = read_lines(&required(a.input.or(cfg.input.clone()), "input")?)?;
            let images = a.images.or(cfg.images.clone()).unwrap_or_else(|| PathBuf::from("."));
            let threshold = a.threshold.or(cfg.phash_threshold).unwrap_or(0);
            let (kept, report) = dedup(&records, &DirImageSource::new(images), threshold);
            write_jsonl(sink(&a.out)?, &kept)?;
            write_json(a.report.as_deref(), &report)?;
        }
        Command::Filter(a) => {
            let records: Vec<PostRecord> = read_lines(&required(a.input.or(cfg.input.clone()), "input")?)?;
            let images = a.images.or(cfg.images.clone()).unwrap_or_else(|| PathBuf::from("."));
            let chain_path = required(a.chain.or(cfg.chain.clone()), "chain")?;
            let specs = load_chain_config(&chain_path)?;
            let mut chain = build_chain(&specs, chain_path.parent().unwrap_or(Path::new(".")))?;
            let mut profiles = Vec::new();
            if (a.optimize_order || cfg.optimize_order.unwrap_or(false)) && !records.is_empty() {
                let n = a.profile_sample.or(cfg.profile_sample).unwrap_or(200).clamp(1, records.len());
                profiles = profile_filters(&records[..n], &chain, Some(&images))?;
                let order = optimize_order(&profiles);
                chain.sort_by_key(|p| order.iter().position(|n| n == p.name()));
            }
            let outcome = run_chain(&records, &chain, Some(&images), ErrorPolicy::Drop)?;
            write_jsonl(sink(&a.out)?, &outcome.kept)?;
            let report = serde_json::json!({
                "order": chain.iter().map(|p| p.name()).collect::<Vec<_>>(),
                "profiles": profiles,
                "stages": outcome.stages,
                "drops": outcome.drops,
            });
            write_json(a.report.as_deref(), &report)?;
        }
        Command::Geocode(a) => {
            let records: Vec<PostRecord> = read_lines(&required(a.input.or(cfg.input.clone()), "input")?)?;
            let gazetteer = Gazetteer::load(&required(a.gazetteer.or(cfg.gazetteer.clone()), "gazetteer")?)?;
            let boundaries = a.boundaries.or(cfg.boundaries.clone()).map(|p| CountryBoundaries::load(&p)).transpose()?;
            let mut geocoder = Geocoder::new(&gazetteer, a.seed.or(cfg.seed).unwrap_or(0));
            if let Some(b) = &boundaries {
                geocoder = geocoder.with_boundaries(b);
            }
            let outcome = geocoder.resolve_all(&records)?;
            let located: Vec<LocatedPost> = outcome
                .resolved
                .into_iter()
                .map(|(record, resolution)| LocatedPost { record, resolution })
                .collect();
            write_jsonl(sink(&a.out)?, &located)?;
            let mut err = io::stderr().lock();
            for (r, reason) in &outcome.unresolved {
                serde_json::to_writer(&mut err, &UnresolvedLine { post_id: &r.post_id, reason: *reason })?;
                writeln!(err)?;
            }
            writeln!(err, "located {} of {} posts", located.len(), records.len())?;
        }
        Command::Tasks { command } => match command {
            TasksCommand::Create { input, redundancy } => {
                let located: Vec<LocatedPost> = read_lines(&input)?;
                let redundancy = redundancy.or(cfg.redundancy).unwrap_or(DEFAULT_REDUNDANCY);
                let tasks = create_tasks(located.iter().map(|l| (&l.record, Some(&l.resolution))), redundancy)?;
                let mut store = open_store()?;
                let added = store.add_tasks(tasks.iter().cloned())?;
                eprintln!("{added} new tasks ({} already present)", tasks.len() - added);
            }
            TasksCommand::Status => {
                println!("{}", serde_json::to_string_pretty(&open_store()?.progress())?);
            }
            TasksCommand::List { out } => {
                let store = open_store()?;
                write_jsonl(sink(&out)?, store.tasks())?;
            }
            TasksCommand::Aggregate(a) => aggregate(&open_store()?, a, &cfg)?,
            TasksCommand::Snapshot => {
                let path = open_store()?.write_snapshot()?;
                eprintln!("wrote {}", path.display());
            }
        },
        Command::Aggregate(a) => aggregate(&open_store()?, a, &cfg)?,
        Command::Serve(a) => {
            let store = open_store()?;
            let options = ApiOptions {
                veto: cfg.veto.unwrap_or_default(),
                snapshot_every: a.snapshot_every.or(cfg.snapshot_every),
                ui_dir: a.ui_dir.or(cfg.ui_dir.clone()),
                images_dir: a.images.or(cfg.images.clone()),
            };
            let addr = a.addr.or(cfg.addr.clone()).unwrap_or_else(|| DEFAULT_ADDR.to_string());
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(api::serve(&addr, AppState::new(store, options)))?;
        }
        Command::Indicators { command } => indicators(command, &cfg, &open_store)?,
        Command::Simulate(a) => simulate(a, &cfg, &open_store)?,
        Command::Run(a) => {
            let input = required(a.input.or(cfg.input.clone()), "input")?;
            let gazetteer = required(a.gazetteer.or(cfg.gazetteer.clone()), "gazetteer")?;
            let kw = keywords(a.keywords, &cfg);
            let kw: Vec<&str> = kw.iter().map(String::as_str).collect();
            let mut pc = PipelineConfig::new(input, gazetteer, &kw);
            pc.images = a.images.or(cfg.images.clone());
            pc.window_start = cfg.from;
            pc.window_end = cfg.to;
            pc.phash_threshold = cfg.phash_threshold.unwrap_or(0);
            pc.chain = a.chain.or(cfg.chain.clone());
            pc.optimize_order = a.optimize_order || cfg.optimize_order.unwrap_or(false);
            if let Some(n) = cfg.profile_sample {
                pc.profile_sample = n;
            }
            pc.boundaries = cfg.boundaries.clone();
            pc.geocode_seed = a.seed.or(cfg.seed).unwrap_or(0);
            pc.redundancy = cfg.redundancy.unwrap_or(DEFAULT_REDUNDANCY);
            let out = match pipeline_run(&pc) {
                Ok(out) => out,
                Err(e) => {
                    eprint!("{}", e.partial.render_table());
                    return Err(e.into());
                }
            };
            let mut store = open_store()?;
            let added = publish_tasks(&mut store, &out)?;
            print!("{}", out.funnel.render_table());
            eprintln!("{added} new tasks in {}", data_dir.display());
            if let Some(p) = a.report {
                write_json(Some(&p), &out.funnel)?;
            }
        }
        Command::Synth(a) => {
            let corpus = SyntheticCorpus::generate(CorpusConfig {
                records: a.records,
                seed: a.seed,
                ..Default::default()
            })?;
            corpus.write_to(&a.out)?;
            let expected = serde_json::json!({
                "funnel": corpus.expected,
                "masks": corpus.expected_masks,
            });
            std::fs::write(a.out.join("expected.json"), serde_json::to_string_pretty(&expected)? + "\n")?;
            let sample = format!(
                "input = \"crawl.jsonl\"\nimages = \".\"\nkeywords = {:?}\nchain = \"chain.json\"\ngazetteer = \"gazetteer.tsv\"\noptimize_order = true\ndata_dir = \"store\"\n",
                sensepipe_core::synth::KEYWORDS
            );
            std::fs::write(a.out.join("sensepipe.toml"), sample)?;
            eprintln!("wrote {} records to {}", corpus.records.len(), a.out.display());
        }
    }
    Ok(())
}

fn aggregate(store: &TaskStore, a: AggregateArgs, cfg: &Config) -> CliResult {
    let veto = a.veto.or(cfg.veto).unwrap_or_default();
    write_jsonl(sink(&a.out)?, &store.aggregate_complete(veto)?)?;
    Ok(())
}

fn table(source: &Source, cfg: &Config, open_store: &dyn Fn() -> CliResult<TaskStore>) -> CliResult<IndicatorTable> {
    let annotations: Vec<AggregatedAnnotation> = match &source.annotations {
        Some(p) => read_lines(p)?,
        None => open_store()?.aggregate_complete(cfg.veto.unwrap_or_default())?,
    };
    let qid = source.question.clone().or(cfg.question.clone());
    let question = match qid.as_deref() {
        None => Question::MASKS,
        Some(id) => Question::parse(id).ok_or_else(|| format!("unknown question `{id}`"))?,
    };
    let threshold = source.threshold.or(cfg.threshold).unwrap_or(DEFAULT_MIN_POSTS);
    Ok(compute_indicators(&annotations, question, threshold))
}

fn indicators(command: IndicatorsCommand, cfg: &Config, open_store: &dyn Fn() -> CliResult<TaskStore>) -> CliResult {
    match command {
        IndicatorsCommand::Compute { source, out } => print_json(&out, &table(&source, cfg, open_store)?),
        IndicatorsCommand::Compare {
            source,
            survey,
            period,
            categories,
            out,
        } => {
            let t = table(&source, cfg, open_store)?;
            let mut records = load_survey(&required(survey.or(cfg.survey.clone()), "survey")?)?;
            if let Some(p) = &period {
                records.retain(|r| &r.period == p);
            }
            let cats = categories
                .iter()
                .map(|c| Category::parse(c).ok_or_else(|| format!("unknown category `{c}`")))
                .collect::<Result<Vec<_>, _>>()?;
            print_json(&out, &compare(&t, &records, &cats)?)
        }
        IndicatorsCommand::Export {
            source,
            out_dir,
            boundaries,
            stem,
        } => {
            let t = table(&source, cfg, open_store)?;
            let b = boundaries.or(cfg.boundaries.clone()).map(|p| CountryBoundaries::load(&p)).transpose()?;
            let files = export_choropleth(&t, b.as_ref(), &out_dir, &stem)?;
            for w in &files.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}\n{}\n{}", files.csv.display(), files.geojson.display(), files.html.display());
            Ok(())
        }
    }
}

fn simulate(a: SimulateArgs, cfg: &Config, open_store: &dyn Fn() -> CliResult<TaskStore>) -> CliResult {
    let truth: HashMap<String, AnswerSheet> = read_lines::<TruthRecord>(&a.truth)?
        .into_iter()
        .map(|t| (t.post_id, t.answers))
        .collect();
    let tasks: Vec<Task> = match &a.tasks {
        Some(p) => read_lines(p)?,
        None => Vec::new(),
    };
    if let Some(t) = tasks.iter().find(|t| !truth.contains_key(&t.post_id)) {
        return Err(format!("no ground truth for post {}", t.post_id).into());
    }
    let sim = SimWorkerConfig {
        worker_count: a.workers,
        accuracy: a.accuracy,
        seed: a.seed.or(cfg.seed).unwrap_or(0),
    };
    let report = match &a.target {
        Some(url) => {
            let mut endpoint = HttpEndpoint::new(url);
            let report = run_simulation(&mut endpoint, &truth, &sim, |_| {})?;
            eprintln!("{}", serde_json::to_string(&endpoint.progress()?)?);
            report
        }
        None => {
            let mut store = open_store()?;
            store.add_tasks(tasks)?;
            let report = run_simulation(&mut store, &truth, &sim, |_| {})?;
            eprintln!("{}", serde_json::to_string(&store.progress())?);
            report
        }
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
