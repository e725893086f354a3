//! Synthetic corpora with planted ground truth.
//!
//! The generator decides every record's fate first (retweet, URL duplicate,
//! near-duplicate, filter labels, location, crowd answers) and counts the
//! expected funnel and indicator rows from those decisions alone, so the
//! expectations never go through the pipeline code they are checked against.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, TimeZone, Utc};
use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::crowd::schema::{AnswerSheet, Question, SOME_OF_THEM, SURELY_NOT, YES};
use crate::error::{Error, Result};
use crate::filter::{ImageLabels, PUBLIC_SCENES};
use crate::geocode::GazetteerEntry;
use crate::ingest::{GeoPoint, PostRecord};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// An 8×8 grid of flat colour blocks. Channel values are multiples of 16 and
/// block edges fall on even pixels, so halving and doubling with centred
/// bilinear sampling are exact in 8-bit.
pub fn scene_image(seed: u64, size: u32) -> RgbImage {
    assert!(size >= 16 && size.is_multiple_of(16), "scene size must be a multiple of 16");
    let mut r = rng(seed ^ 0x5eed_0f_5ce7e);
    let block = size / 8;
    let colours: Vec<[u8; 3]> = (0..64)
        .map(|_| [0; 3].map(|_: u8| (r.gen_range(0..16u32) * 16) as u8))
        .collect();
    RgbImage::from_fn(size, size, |x, y| Rgb(colours[((y / block) * 8 + x / block) as usize]))
}

/// Independent uniform pixels.
pub fn noise_image(seed: u64, size: u32) -> RgbImage {
    let mut r = rng(seed ^ 0x0a15e);
    RgbImage::from_fn(size, size, |_, _| Rgb([r.gen(), r.gen(), r.gen()]))
}

/// 2×2 box average, which is what centred bilinear sampling does at scale ½.
pub fn half(img: &RgbImage) -> RgbImage {
    let (w, h) = (img.width() / 2, img.height() / 2);
    RgbImage::from_fn(w, h, |x, y| {
        let mut px = [0u8; 3];
        for (c, out) in px.iter_mut().enumerate() {
            let sum: u32 = [(0, 0), (1, 0), (0, 1), (1, 1)]
                .iter()
                .map(|(dx, dy)| img.get_pixel(2 * x + dx, 2 * y + dy)[c] as u32)
                .sum();
            *out = ((sum + 2) / 4) as u8;
        }
        Rgb(px)
    })
}

/// Centred bilinear ×2: each output pixel mixes its nearest source pixel
/// (weight ¾) with the next one outward (weight ¼) on each axis.
pub fn double(img: &RgbImage) -> RgbImage {
    let (w, h) = (img.width(), img.height());
    let axis = |d: u32, n: u32| -> (u32, u32) {
        let near = d / 2;
        let far = if d.is_multiple_of(2) { near.saturating_sub(1) } else { (near + 1).min(n - 1) };
        (near, far)
    };
    RgbImage::from_fn(w * 2, h * 2, |x, y| {
        let (x0, x1) = axis(x, w);
        let (y0, y1) = axis(y, h);
        let mut px = [0u8; 3];
        for (c, out) in px.iter_mut().enumerate() {
            let v = |xx, yy| img.get_pixel(xx, yy)[c] as u32;
            let sum = 9 * v(x0, y0) + 3 * v(x1, y0) + 3 * v(x0, y1) + v(x1, y1);
            *out = ((sum + 8) / 16) as u8;
        }
        Rgb(px)
    })
}

/// Pushes each channel away from the pixel's grey level by `amount`.
pub fn saturate(img: &RgbImage, amount: f64) -> RgbImage {
    let mut out = img.clone();
    for p in out.pixels_mut() {
        let [r, g, b] = p.0.map(f64::from);
        let grey = 0.299 * r + 0.587 * g + 0.114 * b;
        p.0 = [r, g, b].map(|c| (grey + (c - grey) * (1.0 + amount)).round().clamp(0.0, 255.0) as u8);
    }
    out
}

/// Separable Gaussian blur, kernel radius ⌈3σ⌉, edges clamped.
pub fn gaussian_blur(img: &RgbImage, sigma: f64) -> RgbImage {
    let radius = (3.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let (w, h) = (img.width() as i64, img.height() as i64);
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut dst = vec![0.0; src.len()];
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    let mut acc = 0.0;
                    for (k, wt) in kernel.iter().enumerate() {
                        let off = k as i64 - radius;
                        let (sx, sy) = if horizontal {
                            ((x + off).clamp(0, w - 1), y)
                        } else {
                            (x, (y + off).clamp(0, h - 1))
                        };
                        acc += wt * src[((sy * w + sx) * 3 + c) as usize];
                    }
                    dst[((y * w + x) * 3 + c) as usize] = acc / norm;
                }
            }
        }
        dst
    };
    let src: Vec<f64> = img.as_raw().iter().map(|&v| v as f64).collect();
    let blurred = pass(&pass(&src, true), false);
    let raw = blurred.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    RgbImage::from_raw(img.width(), img.height(), raw).expect("same dimensions")
}

struct City {
    name: &'static str,
    lat: f64,
    lon: f64,
    country: &'static str,
    population: u64,
}

const CITIES: &[City] = &[
    City { name: "Milan", lat: 45.4642, lon: 9.19, country: "IT", population: 1_352_000 },
    City { name: "Rome", lat: 41.9028, lon: 12.4964, country: "IT", population: 2_873_000 },
    City { name: "Naples", lat: 40.8518, lon: 14.2681, country: "IT", population: 962_000 },
    City { name: "Madrid", lat: 40.4168, lon: -3.7038, country: "ES", population: 3_223_000 },
    City { name: "Barcelona", lat: 41.3874, lon: 2.1686, country: "ES", population: 1_620_000 },
    City { name: "Seville", lat: 37.3891, lon: -5.9845, country: "ES", population: 688_000 },
    City { name: "Paris", lat: 48.8566, lon: 2.3522, country: "FR", population: 2_161_000 },
    City { name: "Lyon", lat: 45.764, lon: 4.8357, country: "FR", population: 513_000 },
    City { name: "Marseille", lat: 43.2965, lon: 5.3698, country: "FR", population: 861_000 },
    City { name: "London", lat: 51.5072, lon: -0.1276, country: "GB", population: 8_982_000 },
    City { name: "Manchester", lat: 53.4808, lon: -2.2426, country: "GB", population: 553_000 },
    City { name: "Berlin", lat: 52.52, lon: 13.405, country: "DE", population: 3_645_000 },
    City { name: "Munich", lat: 48.1351, lon: 11.582, country: "DE", population: 1_472_000 },
    City { name: "Hamburg", lat: 53.5511, lon: 9.9937, country: "DE", population: 1_841_000 },
    City { name: "New York", lat: 40.7128, lon: -74.006, country: "US", population: 8_336_000 },
    City { name: "Los Angeles", lat: 34.0522, lon: -118.2437, country: "US", population: 3_979_000 },
    City { name: "Chicago", lat: 41.8781, lon: -87.6298, country: "US", population: 2_693_000 },
    City { name: "Toronto", lat: 43.6532, lon: -79.3832, country: "CA", population: 2_731_000 },
    City { name: "Vancouver", lat: 49.2827, lon: -123.1207, country: "CA", population: 675_000 },
    City { name: "Sao Paulo", lat: -23.5505, lon: -46.6333, country: "BR", population: 12_330_000 },
    City { name: "Sydney", lat: -33.8688, lon: 151.2093, country: "AU", population: 5_312_000 },
    City { name: "Melbourne", lat: -37.8136, lon: 144.9631, country: "AU", population: 5_078_000 },
    City { name: "Lisbon", lat: 38.7223, lon: -9.1393, country: "PT", population: 505_000 },
    City { name: "Dublin", lat: 53.3498, lon: -6.2603, country: "IE", population: 554_000 },
    City { name: "Athens", lat: 37.9838, lon: 23.7275, country: "GR", population: 664_000 },
];

/// Countries whose post counts are pinned so their valid-answer counts land
/// just below and exactly at the default threshold, plus one far below it.
const PINNED: &[(&str, usize, usize, usize)] = &[
    // (country, tasks, vetoed, cannot-tell) -> n_valid = tasks - vetoed - cannot-tell
    ("PT", 60, 5, 6),
    ("IE", 61, 5, 6),
    ("GR", 20, 2, 1),
];

/// Yes / Some of them rates for the countries sharing the rest of the posts.
const RATES: &[(&str, f64, f64)] = &[
    ("IT", 0.62, 0.18),
    ("ES", 0.71, 0.12),
    ("FR", 0.48, 0.22),
    ("GB", 0.35, 0.25),
    ("DE", 0.55, 0.20),
    ("US", 0.40, 0.30),
    ("CA", 0.45, 0.15),
    ("BR", 0.66, 0.10),
    ("AU", 0.20, 0.30),
];

const FILLER: &[&str] = &[
    "today", "everyone", "wearing", "outside", "crowded", "quiet", "morning", "evening", "walk", "queue",
    "shop", "friends", "family", "staying", "safe", "weekend", "sunny", "rain", "busy", "empty",
    "finally", "look", "at", "this", "our", "the", "is", "so", "very", "still", "again", "please",
];

const PRIVATE_SCENES: &[&str] = &["home", "office", "bedroom", "kitchen"];

pub fn gazetteer_entries() -> Vec<GazetteerEntry> {
    CITIES
        .iter()
        .map(|c| GazetteerEntry {
            name: c.name.to_string(),
            lat: c.lat,
            lon: c.lon,
            country: c.country.to_string(),
            population: Some(c.population),
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub records: usize,
    pub seed: u64,
    pub image_size: u32,
    pub retweet_frac: f64,
    pub url_dup_frac: f64,
    pub phash_dup_frac: f64,
    /// label rates, as fractions of the unique originals
    pub non_photo_frac: f64,
    pub nsfw_frac: f64,
    pub solo_frac: f64,
    pub private_frac: f64,
    /// fraction of unique originals whose text or user location names a city
    pub resolvable_frac: f64,
    /// fraction of the resolvable ones carrying native coordinates
    pub native_frac: f64,
    /// fraction of crowd tasks (outside the pinned countries) whose location
    /// truth is "Surely not"
    pub veto_frac: f64,
    pub cannot_tell_frac: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            records: 10_000,
            seed: 2020,
            image_size: 64,
            retweet_frac: 0.10,
            url_dup_frac: 0.10,
            phash_dup_frac: 0.05,
            non_photo_frac: 0.10,
            nsfw_frac: 0.04,
            solo_frac: 0.15,
            private_frac: 0.12,
            resolvable_frac: 0.60,
            native_frac: 0.03,
            veto_frac: 0.15,
            cannot_tell_frac: 0.05,
        }
    }
}

pub const KEYWORDS: [&str; 2] = ["mask", "covid"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageTransform {
    None,
    Half,
    Double,
}

/// How to render the image stored at `path`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSpec {
    pub path: PathBuf,
    pub scene_seed: u64,
    pub transform: ImageTransform,
}

impl ImageSpec {
    pub fn render(&self, size: u32) -> RgbImage {
        let base = scene_image(self.scene_seed, size);
        match self.transform {
            ImageTransform::None => base,
            ImageTransform::Half => half(&base),
            ImageTransform::Double => double(&base),
        }
    }
}

/// Ground-truth answers for one post, keyed by post id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub post_id: String,
    pub answers: AnswerSheet,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedFunnel {
    pub input: usize,
    pub crawled: usize,
    pub url_duplicates: usize,
    pub phash_duplicates: usize,
    pub after_dedup: usize,
    pub after_filtering: usize,
    pub after_geolocating: usize,
    pub native_located: usize,
    pub annotated: usize,
    pub location_validated: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedRow {
    pub yes: usize,
    pub some: usize,
    pub no: usize,
}

impl ExpectedRow {
    pub fn n_valid(&self) -> usize {
        self.yes + self.some + self.no
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub config: CorpusConfig,
    /// in ingest order
    pub records: Vec<PostRecord>,
    pub labels: Vec<ImageLabels>,
    pub images: Vec<ImageSpec>,
    pub gazetteer: Vec<GazetteerEntry>,
    /// one entry per post expected to reach the crowd
    pub truth: Vec<TruthRecord>,
    pub expected: ExpectedFunnel,
    /// mask answers among location-valid crowd posts, every country
    pub expected_masks: BTreeMap<String, ExpectedRow>,
}

#[derive(Clone)]
struct Draft {
    post_id: String,
    created_at: DateTime<Utc>,
    image_url: String,
    image_path: PathBuf,
    is_retweet: bool,
    labels: ImageLabels,
    /// chosen city index when resolvable
    city: Option<usize>,
    native: bool,
    in_user_location: bool,
}

fn take_exact<T>(rng: &mut ChaCha8Rng, pool: &[T], n: usize) -> BTreeSet<usize> {
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.shuffle(rng);
    idx.into_iter().take(n).collect()
}

fn count(frac: f64, of: usize) -> usize {
    (frac * of as f64).round() as usize
}

fn filler(rng: &mut ChaCha8Rng, words: usize) -> String {
    (0..words).map(|_| *FILLER.choose(rng).expect("non-empty")).collect::<Vec<_>>().join(" ")
}

fn cities_of(country: &str) -> Vec<usize> {
    (0..CITIES.len()).filter(|&i| CITIES[i].country == country).collect()
}

/// Fills every question the guards leave visible, keeping the given values.
fn complete_sheet(rng: &mut ChaCha8Rng, mut sheet: AnswerSheet) -> AnswerSheet {
    for q in Question::all() {
        if sheet.visible(q) && sheet.get(q).is_none() {
            let opt = *q.options().choose(rng).expect("options");
            sheet.set(q, Some(opt));
        }
    }
    sheet.clear_hidden();
    sheet
}

impl SyntheticCorpus {
    pub fn generate(config: CorpusConfig) -> Result<Self> {
        let n = config.records;
        let retweets = count(config.retweet_frac, n);
        let url_dups = count(config.url_dup_frac, n);
        let phash_dups = count(config.phash_dup_frac, n);
        let originals = n
            .checked_sub(retweets + url_dups + phash_dups)
            .filter(|&o| o >= url_dups + phash_dups)
            .ok_or_else(|| Error::contract("duplicate fractions leave too few originals"))?;
        let mut r = rng(config.seed);
        let base = Utc.with_ymd_and_hms(2020, 5, 12, 0, 0, 0).single().expect("valid date");

        // originals and retweets get distinct scene images and timestamps 10 s apart
        let mut slots: Vec<usize> = (0..originals + retweets).collect();
        slots.shuffle(&mut r);
        let mut drafts: Vec<Draft> = Vec::with_capacity(n);
        let mut images = Vec::with_capacity(n);
        for (i, &slot) in slots.iter().enumerate() {
            let post_id = format!("{}", 1_260_000_000_000_000_000u64 + i as u64 * 7919);
            let path = PathBuf::from(format!("img/{post_id}.png"));
            images.push(ImageSpec {
                path: path.clone(),
                scene_seed: config.seed.wrapping_mul(1_000_003).wrapping_add(i as u64),
                transform: ImageTransform::None,
            });
            drafts.push(Draft {
                post_id: post_id.clone(),
                created_at: base + Duration::seconds(10 * slot as i64),
                image_url: format!("https://pbs.example.org/media/{post_id}.png"),
                image_path: path,
                is_retweet: i >= originals,
                labels: ImageLabels {
                    post_id,
                    ..Default::default()
                },
                city: None,
                native: false,
                in_user_location: false,
            });
        }

        // labels over the unique originals, each subset drawn with an exact size
        let non_photo = take_exact(&mut r, &drafts[..originals], count(config.non_photo_frac, originals));
        let nsfw = take_exact(&mut r, &drafts[..originals], count(config.nsfw_frac, originals));
        let solo = take_exact(&mut r, &drafts[..originals], count(config.solo_frac, originals));
        let private = take_exact(&mut r, &drafts[..originals], count(config.private_frac, originals));
        let resolvable = take_exact(&mut r, &drafts[..originals], count(config.resolvable_frac, originals));
        for (i, d) in drafts.iter_mut().enumerate() {
            let orig = i < originals;
            d.labels.is_photo = Some(!(orig && non_photo.contains(&i)));
            d.labels.nsfw = Some(orig && nsfw.contains(&i));
            d.labels.people = Some(if orig && solo.contains(&i) { 1 } else { r.gen_range(2..9) });
            let scene = if orig && private.contains(&i) {
                PRIVATE_SCENES.choose(&mut r)
            } else {
                PUBLIC_SCENES.choose(&mut r)
            };
            d.labels.scene = scene.map(|s| s.to_string());
        }
        let passes = |i: usize| !non_photo.contains(&i) && !nsfw.contains(&i) && !solo.contains(&i) && !private.contains(&i);
        let after_filtering = (0..originals).filter(|&i| passes(i)).count();

        // crowd-bound posts: filtered-in and resolvable; countries by quota
        let mut crowd: Vec<usize> = (0..originals).filter(|&i| passes(i) && resolvable.contains(&i)).collect();
        crowd.shuffle(&mut r);
        let pinned_total: usize = PINNED.iter().map(|p| p.1).sum();
        let rest = crowd
            .len()
            .checked_sub(pinned_total)
            .ok_or_else(|| Error::contract("corpus too small for the pinned countries"))?;
        let mut quotas: Vec<(&str, usize)> = PINNED.iter().map(|p| (p.0, p.1)).collect();
        for (k, (c, _, _)) in RATES.iter().enumerate() {
            let share = rest / RATES.len() + usize::from(k < rest % RATES.len());
            quotas.push((*c, share));
        }
        let mut country_posts: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        let mut it = crowd.iter().copied();
        for (c, q) in &quotas {
            let posts: Vec<usize> = it.by_ref().take(*q).collect();
            let cities = cities_of(c);
            for &i in &posts {
                drafts[i].city = Some(*cities.choose(&mut r).expect("country has cities"));
            }
            country_posts.insert(*c, posts);
        }
        for &i in &resolvable {
            if drafts[i].city.is_none() {
                drafts[i].city = Some(r.gen_range(0..CITIES.len()));
            }
        }
        let resolvable_list: Vec<usize> = resolvable.iter().copied().collect();
        let native = take_exact(&mut r, &resolvable_list, count(config.native_frac, resolvable_list.len()));
        let mut native_located = 0;
        for k in native {
            let i = resolvable_list[k];
            drafts[i].native = true;
            if passes(i) {
                native_located += 1;
            }
        }
        for &i in &resolvable {
            drafts[i].in_user_location = !drafts[i].native && r.gen_bool(0.3);
        }

        // crowd truth with exact per-country counts
        let mut truth = Vec::new();
        let mut expected_masks = BTreeMap::new();
        let mut vetoed_total = 0;
        for (c, posts) in &country_posts {
            let (veto, cannot) = match PINNED.iter().find(|p| p.0 == *c) {
                Some(p) => (p.2, p.3),
                None => (count(config.veto_frac, posts.len()), count(config.cannot_tell_frac, posts.len())),
            };
            let substantive = posts.len() - veto - cannot;
            let (yes_rate, some_rate) = RATES.iter().find(|x| x.0 == *c).map_or((0.5, 0.25), |x| (x.1, x.2));
            let yes = count(yes_rate, substantive);
            let some = count(some_rate, substantive).min(substantive - yes);
            let row = ExpectedRow {
                yes,
                some,
                no: substantive - yes - some,
            };
            vetoed_total += veto;
            for (k, &i) in posts.iter().enumerate() {
                let mask = if k < veto {
                    *["Yes", "No", SOME_OF_THEM].choose(&mut r).expect("non-empty")
                } else if k < veto + cannot {
                    "Cannot tell"
                } else if k < veto + cannot + yes {
                    YES
                } else if k < veto + cannot + yes + some {
                    SOME_OF_THEM
                } else {
                    "No"
                };
                let location = if k < veto {
                    SURELY_NOT
                } else {
                    *["Yes", "Maybe", "Cannot tell"].choose(&mut r).expect("non-empty")
                };
                let sheet = AnswerSheet::new()
                    .with(Question::PHOTO, YES)
                    .with(Question::PEOPLE, YES)
                    .with(Question::MASKS, mask)
                    .with(Question::LOCATION, location);
                truth.push(TruthRecord {
                    post_id: drafts[i].post_id.clone(),
                    answers: complete_sheet(&mut r, sheet),
                });
            }
            expected_masks.insert(c.to_string(), row);
        }
        truth.sort_by(|a, b| a.post_id.cmp(&b.post_id));

        // URL and near duplicates of distinct originals, a few seconds later
        let sources = take_exact(&mut r, &drafts[..originals], url_dups + phash_dups);
        let mut sources: Vec<usize> = sources.into_iter().collect();
        sources.shuffle(&mut r);
        for (k, &src) in sources.iter().enumerate() {
            let s = drafts[src].clone();
            let post_id = format!("{}", 1_270_000_000_000_000_000u64 + k as u64 * 7919);
            let url_dup = k < url_dups;
            let (image_url, image_path, offset) = if url_dup {
                (s.image_url.clone(), s.image_path.clone(), 3)
            } else {
                let path = PathBuf::from(format!("img/{post_id}.png"));
                let src_spec = &images[src];
                images.push(ImageSpec {
                    path: path.clone(),
                    scene_seed: src_spec.scene_seed,
                    transform: if k % 2 == 0 { ImageTransform::Half } else { ImageTransform::Double },
                });
                (format!("https://pbs.example.org/media/{post_id}.png"), path, 6)
            };
            drafts.push(Draft {
                post_id: post_id.clone(),
                created_at: s.created_at + Duration::seconds(offset),
                image_url,
                image_path,
                is_retweet: false,
                labels: ImageLabels { post_id, ..s.labels },
                city: s.city,
                native: s.native,
                in_user_location: s.in_user_location,
            });
        }

        // texts
        let mut records = Vec::with_capacity(n);
        for d in &drafts {
            let kw = KEYWORDS.choose(&mut r).expect("non-empty");
            let mut words = vec![filler(&mut r, 3), kw.to_string(), filler(&mut r, 2)];
            let mut user_location = r.gen_bool(0.2).then(|| "somewhere nice".to_string());
            let mut native_geo = None;
            if let Some(c) = d.city {
                let city = &CITIES[c];
                if d.native {
                    native_geo = Some(GeoPoint { lat: city.lat, lon: city.lon });
                    // a text mention of a city elsewhere must not win over coordinates
                    let other = CITIES.iter().find(|o| o.country != city.country).expect("several countries");
                    words.push(other.name.to_string());
                } else if d.in_user_location {
                    user_location = Some(format!("{}, {}", city.name, city.country));
                } else {
                    words.insert(1, city.name.to_string());
                }
            }
            records.push(PostRecord {
                post_id: d.post_id.clone(),
                text: words.join(" "),
                created_at: d.created_at,
                user_location,
                image_url: d.image_url.clone(),
                image_path: Some(d.image_path.clone()),
                native_geo,
                is_retweet: d.is_retweet,
                lang: Some("en".into()),
            });
        }
        let labels: Vec<ImageLabels> = drafts.iter().map(|d| d.labels.clone()).collect();
        records.shuffle(&mut r);

        let after_geolocating = (0..originals).filter(|&i| passes(i) && resolvable.contains(&i)).count();
        let expected = ExpectedFunnel {
            input: n,
            crawled: n - retweets,
            url_duplicates: url_dups,
            phash_duplicates: phash_dups,
            after_dedup: originals,
            after_filtering,
            after_geolocating,
            native_located,
            annotated: after_geolocating,
            location_validated: after_geolocating - vetoed_total,
        };
        Ok(SyntheticCorpus {
            config,
            records,
            labels,
            images,
            gazetteer: gazetteer_entries(),
            truth,
            expected,
            expected_masks,
        })
    }

    /// Writes `crawl.jsonl`, `labels.jsonl`, `gazetteer.tsv`, `truth.jsonl`,
    /// `chain.json` and the images under `img/`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let io = |p: &Path, e| Error::io(p, e);
        std::fs::create_dir_all(dir.join("img")).map_err(|e| io(dir, e))?;
        let write_lines = |name: &str, lines: Vec<String>| -> Result<()> {
            let path = dir.join(name);
            let mut body = lines.join("\n");
            if !body.is_empty() {
                body.push('\n');
            }
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))
        };
        write_lines("crawl.jsonl", self.records.iter().map(serde_json::to_string).collect::<std::result::Result<_, _>>()?)?;
        write_lines("labels.jsonl", self.labels.iter().map(serde_json::to_string).collect::<std::result::Result<_, _>>()?)?;
        write_lines("truth.jsonl", self.truth.iter().map(serde_json::to_string).collect::<std::result::Result<_, _>>()?)?;
        let mut tsv = vec!["name\tlat\tlon\tcountry\tpopulation".to_string()];
        tsv.extend(self.gazetteer.iter().map(|e| {
            format!("{}\t{}\t{}\t{}\t{}", e.name, e.lat, e.lon, e.country, e.population.unwrap_or(0))
        }));
        write_lines("gazetteer.tsv", tsv)?;
        let chain = serde_json::json!([
            {"name": "person", "kind": "label_oracle", "params": {"role": "person", "labels": "labels.jsonl"}},
            {"name": "photo", "kind": "label_oracle", "params": {"role": "photo", "labels": "labels.jsonl"}},
            {"name": "nsfw", "kind": "label_oracle", "params": {"role": "nsfw", "labels": "labels.jsonl"}},
            {"name": "public_private", "kind": "label_oracle", "params": {"role": "scene", "labels": "labels.jsonl"}},
        ]);
        let chain_path = dir.join("chain.json");
        std::fs::write(&chain_path, serde_json::to_vec_pretty(&chain)?).map_err(|e| io(&chain_path, e))?;
        self.write_images(dir)
    }

    pub fn write_images(&self, dir: &Path) -> Result<()> {
        let size = self.config.image_size;
        let write = |spec: &ImageSpec| -> Result<()> {
            let path = dir.join(&spec.path);
            let bytes = crate::imaging::encode_png(&spec.render(size))?;
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            self.images.par_iter().try_for_each(write)
        }
        #[cfg(not(feature = "parallel"))]
        {
            self.images.iter().try_for_each(write)
        }
    }
}
