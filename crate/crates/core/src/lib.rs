//! Image-based social sensing: turn a crawl of image posts into per-country
//! indicators.
//!
//! Stages, in pipeline order:
//! - [`ingest`]: parse crawl dumps, apply crawl semantics
//! - [`dedup`]: URL identity and perceptual-hash near duplicates
//! - [`filter`]: relevance classifier chains and their ordering
//! - [`geocode`]: gazetteer lookup of a country per post
//! - [`crowd`]: annotation tasks, answer validation, majority aggregation
//! - [`indicators`]: per-country percentages, survey correlation, maps
//!
//! [`pipeline`] wires the batch stages together; [`simcrowd`] stands in for
//! human annotators; [`synth`] builds corpora with planted ground truth.

pub mod boundaries;
pub mod crowd;
pub mod dedup;
pub mod error;
pub mod eventlog;
pub mod filter;
pub mod geocode;
pub mod imaging;
pub mod indicators;
pub mod ingest;
pub mod pipeline;
pub mod simcrowd;
pub mod synth;

pub use error::{Error, Result};
