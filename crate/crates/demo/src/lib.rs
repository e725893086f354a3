//! Browser bindings for three core operations: filter ordering, perceptual
//! hashing of synthetic images, and majority-vote accuracy.
//!
//! Every exported function takes primitives or a JSON string and returns a
//! JSON string; the plain-Rust versions underneath are what the tests call.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use sensepipe_core::crowd::majority;
use sensepipe_core::crowd::schema::{AnswerSheet, Question};
use sensepipe_core::dedup::{hamming, phash};
use sensepipe_core::filter::{expected_cost, optimize_order, FilterProfile, EXHAUSTIVE_LIMIT};
use sensepipe_core::imaging::RgbImage;
use sensepipe_core::simcrowd::{simulate_sheet, worker_id, SimWorkerConfig};
use sensepipe_core::synth;

fn js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[derive(Debug, Clone, Deserialize)]
pub struct FilterInput {
    pub name: String,
    pub removal_rate: f64,
    /// seconds per image
    pub mean_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedOrder {
    pub order: Vec<String>,
    pub expected_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderReport {
    pub best: RankedOrder,
    /// every permutation, cheapest first (empty above the exhaustive limit)
    pub ranked: Vec<RankedOrder>,
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for k in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..=p.len()).map(move |pos| {
                    let mut q = p.clone();
                    q.insert(pos, k);
                    q
                })
            })
            .collect();
    }
    out
}

pub fn filter_order(filters: &[FilterInput]) -> Result<OrderReport, String> {
    for f in filters {
        if !(0.0..=1.0).contains(&f.removal_rate) {
            return Err(format!("{}: removal rate must lie in [0, 1]", f.name));
        }
        if !(f.mean_cost >= 0.0 && f.mean_cost.is_finite()) {
            return Err(format!("{}: cost must be a non-negative number", f.name));
        }
    }
    let profiles: Vec<FilterProfile> = filters
        .iter()
        .map(|f| FilterProfile::new(&f.name, f.removal_rate, f.mean_cost, 0))
        .collect();
    let cost_of = |names: &[String]| {
        expected_cost(names.iter().map(|n| profiles.iter().find(|p| &p.filter_name == n).expect("known name")))
    };
    let order = optimize_order(&profiles);
    let best = RankedOrder {
        expected_cost: cost_of(&order),
        order,
    };
    let mut ranked = Vec::new();
    if profiles.len() <= EXHAUSTIVE_LIMIT.min(6) {
        ranked = permutations(profiles.len())
            .into_iter()
            .map(|perm| {
                let order: Vec<String> = perm.iter().map(|&i| profiles[i].filter_name.clone()).collect();
                RankedOrder {
                    expected_cost: cost_of(&order),
                    order,
                }
            })
            .collect();
        ranked.sort_by(|a, b| a.expected_cost.total_cmp(&b.expected_cost).then_with(|| a.order.cmp(&b.order)));
    }
    Ok(OrderReport { best, ranked })
}

/// `filters_json`: `[{"name", "removal_rate", "mean_cost"}, ...]`
#[wasm_bindgen(js_name = filterOrder)]
pub fn filter_order_js(filters_json: &str) -> Result<String, JsValue> {
    js(serde_json::from_str::<Vec<FilterInput>>(filters_json)
        .map_err(|e| e.to_string())
        .and_then(|f| filter_order(&f)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Raster {
    pub width: u32,
    pub height: u32,
    /// RGBA, row-major
    pub rgba: Vec<u8>,
}

impl From<&RgbImage> for Raster {
    fn from(img: &RgbImage) -> Self {
        let rgba = img.pixels().flat_map(|p| [p[0], p[1], p[2], 255]).collect();
        Raster {
            width: img.width(),
            height: img.height(),
            rgba,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HashComparison {
    pub original: Raster,
    pub edited: Raster,
    pub hash_original: String,
    pub hash_edited: String,
    /// bit 0 first
    pub differing_bits: Vec<u8>,
    pub distance: u32,
}

/// Edits: `identical`, `half`, `double`, `blur` (amount = sigma),
/// `saturate` (amount = fraction), `unrelated` (a noise image).
pub fn phash_compare(seed: u64, edit: &str, amount: f64) -> Result<HashComparison, String> {
    let original = synth::scene_image(seed, 64);
    let edited = match edit {
        "identical" => original.clone(),
        "half" => synth::half(&original),
        "double" => synth::double(&original),
        "blur" if amount > 0.0 && amount <= 8.0 => synth::gaussian_blur(&original, amount),
        "blur" => return Err("blur sigma must lie in (0, 8]".into()),
        "saturate" if (-1.0..=1.0).contains(&amount) => synth::saturate(&original, amount),
        "saturate" => return Err("saturation change must lie in [-1, 1]".into()),
        "unrelated" => synth::noise_image(seed ^ 0x5eed, 64),
        other => return Err(format!("unknown edit `{other}`")),
    };
    let a = phash(&original).map_err(|e| e.to_string())?;
    let b = phash(&edited).map_err(|e| e.to_string())?;
    let diff = a.bits() ^ b.bits();
    Ok(HashComparison {
        original: Raster::from(&original),
        edited: Raster::from(&edited),
        hash_original: a.to_string(),
        hash_edited: b.to_string(),
        differing_bits: (0..64u8).filter(|&i| diff >> (63 - i) & 1 == 1).collect(),
        distance: hamming(a, b),
    })
}

#[wasm_bindgen(js_name = phashCompare)]
pub fn phash_compare_js(seed: u32, edit: &str, amount: f64) -> Result<String, JsValue> {
    js(phash_compare(seed as u64, edit, amount))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub accuracy: f64,
    /// P(more than half of the votes are correct)
    pub closed_form: f64,
    pub simulated: f64,
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Strict-majority probability for `redundancy` independent voters on a
/// yes/no question.
pub fn majority_closed_form(p: f64, redundancy: u32) -> f64 {
    (redundancy / 2 + 1..=redundancy)
        .map(|k| binomial(redundancy, k) * p.powi(k as i32) * (1.0 - p).powi((redundancy - k) as i32))
        .sum()
}

/// Simulated workers answer the photo question of `tasks` posts whose truth
/// alternates Yes/No; the curve reports how often the majority is right.
pub fn majority_curve(redundancy: u32, tasks: u32, steps: u32, seed: u64) -> Result<Vec<CurvePoint>, String> {
    if redundancy == 0 || redundancy > 15 {
        return Err("redundancy must lie in 1..=15".into());
    }
    if tasks == 0 || tasks > 20_000 || !(2..=101).contains(&steps) {
        return Err("tasks must lie in 1..=20000 and steps in 2..=101".into());
    }
    let yes = AnswerSheet::new().with(Question::PHOTO, "Yes");
    let no = AnswerSheet::new().with(Question::PHOTO, "No");
    let workers: Vec<String> = (0..redundancy as usize).map(worker_id).collect();
    (0..steps)
        .map(|s| {
            let p = s as f64 / (steps - 1) as f64;
            let cfg = SimWorkerConfig {
                worker_count: redundancy as usize,
                accuracy: p,
                seed,
            };
            let mut correct = 0u32;
            for t in 0..tasks {
                let truth = if t % 2 == 0 { &yes } else { &no };
                let task_id = format!("t{t}");
                let votes: Vec<AnswerSheet> = workers.iter().map(|w| simulate_sheet(&cfg, w, &task_id, truth)).collect();
                let m = majority(votes.iter().map(|v| v.get(Question::PHOTO)));
                correct += u32::from(m.value() == truth.get(Question::PHOTO));
            }
            Ok(CurvePoint {
                accuracy: p,
                closed_form: majority_closed_form(p, redundancy),
                simulated: correct as f64 / tasks as f64,
            })
        })
        .collect()
}

#[wasm_bindgen(js_name = majorityCurve)]
pub fn majority_curve_js(redundancy: u32, tasks: u32, steps: u32, seed: u32) -> Result<String, JsValue> {
    js(majority_curve(redundancy, tasks, steps, seed as u64))
}
