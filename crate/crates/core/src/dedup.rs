//! Duplicate removal: exact image-URL identity, then perceptual-hash
//! near-duplicates.
//!
//! Both passes scan records chronologically (`created_at`, ties by `post_id`)
//! and keep the first representative; the returned list preserves input order.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{self, ImageSource, RgbImage};
use crate::ingest::PostRecord;

const THUMB: usize = 32;
const BLOCK: usize = 8;

/// 64-bit DCT perceptual hash. Coefficient `i` of the row-major 8x8 block
/// maps to bit `63 - i`, so the hex form reads in coefficient order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PerceptualHash(pub u64);

impl PerceptualHash {
    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn bit(self, i: usize) -> bool {
        (self.0 >> (63 - i)) & 1 == 1
    }
}

impl fmt::Display for PerceptualHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for PerceptualHash {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() != 16 || !s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
            return Err(Error::invalid(format!("bad perceptual hash `{s}`")));
        }
        u64::from_str_radix(s, 16)
            .map(PerceptualHash)
            .map_err(|e| Error::invalid(e.to_string()))
    }
}

impl Serialize for PerceptualHash {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PerceptualHash {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn hamming(a: PerceptualHash, b: PerceptualHash) -> u32 {
    (a.0 ^ b.0).count_ones()
}

/// The 64 low-frequency DCT coefficients the hash thresholds.
pub fn phash_coefficients(img: &RgbImage) -> Result<Vec<f64>> {
    if img.width() < imaging::MIN_SIDE || img.height() < imaging::MIN_SIDE {
        return Err(Error::Image(format!(
            "degenerate image {}x{}",
            img.width(),
            img.height()
        )));
    }
    let thumb = imaging::resize_bilinear(&imaging::luma(img), THUMB, THUMB);
    Ok(imaging::dct2_low(&thumb, BLOCK))
}

/// luma -> bilinear 32x32 -> orthonormal DCT-II -> 8x8 block (DC included)
/// -> bit set where the coefficient is strictly above the block median.
pub fn phash(img: &RgbImage) -> Result<PerceptualHash> {
    let coeffs = phash_coefficients(img)?;
    let mut sorted = coeffs.clone();
    sorted.sort_by(f64::total_cmp);
    let median = (sorted[31] + sorted[32]) / 2.0;
    let bits = coeffs
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > median)
        .fold(0u64, |acc, (i, _)| acc | 1 << (63 - i));
    Ok(PerceptualHash(bits))
}

pub fn phash_bytes(bytes: &[u8]) -> Result<PerceptualHash> {
    phash(&imaging::decode(bytes)?)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupReport {
    pub input_count: usize,
    pub url_duplicates_removed: usize,
    pub phash_duplicates_removed: usize,
    pub decode_failures: usize,
    pub output_count: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<DecodeFailure>,
}

impl DedupReport {
    pub fn is_consistent(&self) -> bool {
        self.input_count
            == self.output_count
                + self.url_duplicates_removed
                + self.phash_duplicates_removed
                + self.decode_failures
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeFailure {
    pub post_id: String,
    pub reason: String,
}

fn chronological(records: &[PostRecord]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&records[a], &records[b]);
        ra.created_at
            .cmp(&rb.created_at)
            .then_with(|| ra.post_id.cmp(&rb.post_id))
    });
    order
}

fn keep_mask(records: &[PostRecord], keep: &[bool]) -> Vec<PostRecord> {
    records
        .iter()
        .zip(keep)
        .filter(|(_, &k)| k)
        .map(|(r, _)| r.clone())
        .collect()
}

/// Keeps the earliest post for every distinct `image_url`.
pub fn dedup_urls(records: &[PostRecord]) -> Vec<PostRecord> {
    let mut seen = HashSet::new();
    let mut keep = vec![false; records.len()];
    for i in chronological(records) {
        keep[i] = seen.insert(records[i].image_url.as_str());
    }
    keep_mask(records, &keep)
}

/// Hashes already kept. Exact lookups at threshold 0, linear scan otherwise.
#[derive(Debug, Default)]
pub struct SeenHashes {
    threshold: u32,
    exact: HashSet<PerceptualHash>,
    list: Vec<PerceptualHash>,
}

impl SeenHashes {
    pub fn new(threshold: u32) -> Self {
        SeenHashes {
            threshold,
            ..Default::default()
        }
    }

    pub fn matches(&self, h: PerceptualHash) -> bool {
        if self.threshold == 0 {
            self.exact.contains(&h)
        } else {
            self.list.iter().any(|&k| hamming(k, h) <= self.threshold)
        }
    }

    pub fn insert(&mut self, h: PerceptualHash) {
        if self.threshold == 0 {
            self.exact.insert(h);
        } else {
            self.list.push(h);
        }
    }
}

fn hash_all<S: ImageSource + ?Sized>(records: &[PostRecord], images: &S) -> Vec<Result<PerceptualHash>> {
    let one = |r: &PostRecord| images.load(r).and_then(|img| phash(&img));
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        records.par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        records.iter().map(one).collect()
    }
}

/// Drops every record whose hash lies within `threshold` of an earlier kept one.
/// Records whose image cannot be loaded are dropped and counted as failures.
pub fn dedup_images<S: ImageSource + ?Sized>(
    records: &[PostRecord],
    images: &S,
    threshold: u32,
) -> (Vec<PostRecord>, DedupReport) {
    let hashes = hash_all(records, images);
    let mut report = DedupReport {
        input_count: records.len(),
        ..Default::default()
    };
    let mut seen = SeenHashes::new(threshold);
    let mut keep = vec![false; records.len()];
    for i in chronological(records) {
        match &hashes[i] {
            Ok(h) if seen.matches(*h) => report.phash_duplicates_removed += 1,
            Ok(h) => {
                seen.insert(*h);
                keep[i] = true;
            }
            Err(e) => {
                report.decode_failures += 1;
                report.failures.push(DecodeFailure {
                    post_id: records[i].post_id.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }
    let kept = keep_mask(records, &keep);
    report.output_count = kept.len();
    (kept, report)
}

/// URL pass followed by the perceptual-hash pass.
pub fn dedup<S: ImageSource + ?Sized>(
    records: &[PostRecord],
    images: &S,
    threshold: u32,
) -> (Vec<PostRecord>, DedupReport) {
    let by_url = dedup_urls(records);
    let (kept, mut report) = dedup_images(&by_url, images, threshold);
    report.input_count = records.len();
    report.url_duplicates_removed = records.len() - by_url.len();
    (kept, report)
}

/// Hashes for a set of records, keyed by post id (for reporting).
pub fn hash_records<S: ImageSource + ?Sized>(
    records: &[PostRecord],
    images: &S,
) -> HashMap<String, Result<PerceptualHash>> {
    records
        .iter()
        .map(|r| r.post_id.clone())
        .zip(hash_all(records, images))
        .collect()
}
