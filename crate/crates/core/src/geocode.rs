//! Country assignment from native geotags or gazetteer matching.
//!
//! Native coordinates always take precedence; the text is consulted only when
//! a post carries no geotag. Among text candidates one is picked uniformly at
//! random from a generator seeded by `(seed, post_id)`.

use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::boundaries::CountryBoundaries;
use crate::error::{Error, Result};
use crate::ingest::{GeoPoint, PostRecord};

pub const NATIVE_RADIUS_KM: f64 = 100.0;
const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazetteerEntry {
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub country: String,
    #[serde(default)]
    pub population: Option<u64>,
}

pub fn is_country_code(code: &str) -> bool {
    code.len() == 2 && code.bytes().all(|b| b.is_ascii_uppercase())
}

impl GazetteerEntry {
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::invalid("gazetteer entry with empty name"));
        }
        if !self.point().in_bounds() {
            return Err(Error::invalid(format!("{}: coordinates out of bounds", self.name)));
        }
        if !is_country_code(&self.country) {
            return Err(Error::invalid(format!(
                "{}: bad country code `{}`",
                self.name, self.country
            )));
        }
        Ok(())
    }

    pub fn point(&self) -> GeoPoint {
        GeoPoint {
            lat: self.lat,
            lon: self.lon,
        }
    }
}

pub fn tokenize(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (la1, la2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = la2 - la1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + la1.cos() * la2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Name-indexed gazetteer. Immutable after construction.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: Vec<GazetteerEntry>,
    /// normalized name -> entry indices, most populous first
    index: HashMap<String, Vec<usize>>,
    max_tokens: usize,
}

impl Gazetteer {
    pub fn new(entries: Vec<GazetteerEntry>) -> Result<Self> {
        let mut index: HashMap<String, Vec<usize>> = HashMap::new();
        let mut max_tokens = 0;
        for (i, e) in entries.iter().enumerate() {
            e.validate()?;
            let toks = tokenize(&e.name);
            if toks.is_empty() {
                return Err(Error::invalid(format!("gazetteer name `{}` has no tokens", e.name)));
            }
            max_tokens = max_tokens.max(toks.len());
            index.entry(toks.join(" ")).or_default().push(i);
        }
        for ids in index.values_mut() {
            ids.sort_by(|&a, &b| {
                let (ea, eb) = (&entries[a], &entries[b]);
                eb.population
                    .cmp(&ea.population)
                    .then_with(|| ea.country.cmp(&eb.country))
                    .then_with(|| a.cmp(&b))
            });
        }
        Ok(Gazetteer {
            entries,
            index,
            max_tokens,
        })
    }

    /// Tab-separated `name, lat, lon, country, population`. An optional header
    /// row starting with `name` and `#` comment lines are ignored.
    pub fn from_tsv<R: BufRead>(source: R) -> Result<Self> {
        let mut entries = Vec::new();
        for (idx, line) in source.lines().enumerate() {
            let line = line?;
            let line_no = idx + 1;
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = trimmed.split('\t').collect();
            if line_no == 1 && cols[0].eq_ignore_ascii_case("name") {
                continue;
            }
            if cols.len() < 4 {
                return Err(Error::invalid(format!("gazetteer line {line_no}: expected 4-5 columns")));
            }
            let num = |s: &str, what: &str| -> Result<f64> {
                s.trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("gazetteer line {line_no}: bad {what} `{s}`")))
            };
            let population = match cols.get(4).map(|s| s.trim()) {
                None | Some("") => None,
                Some(p) => Some(p.parse().map_err(|_| {
                    Error::invalid(format!("gazetteer line {line_no}: bad population `{p}`"))
                })?),
            };
            entries.push(GazetteerEntry {
                name: cols[0].trim().to_string(),
                lat: num(cols[1], "lat")?,
                lon: num(cols[2], "lon")?,
                country: cols[3].trim().to_string(),
                population,
            });
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(std::io::BufReader::new(file))
    }

    pub fn entries(&self) -> &[GazetteerEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nearest_within(&self, p: GeoPoint, radius_km: f64) -> Option<(&GazetteerEntry, f64)> {
        self.entries
            .iter()
            .map(|e| (e, haversine_km(p, e.point())))
            .filter(|(_, d)| *d <= radius_km)
            .min_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.name.cmp(&b.0.name)))
    }

    fn scan(&self, tokens: &[String], offset: usize, out: &mut Vec<(usize, usize)>) {
        let mut i = 0;
        while i < tokens.len() {
            let longest = self.max_tokens.min(tokens.len() - i);
            let hit = (1..=longest)
                .rev()
                .find_map(|len| self.index.get(&tokens[i..i + len].join(" ")).map(|ids| (len, ids[0])));
            match hit {
                Some((len, entry)) => {
                    out.push((offset + i, entry));
                    i += len;
                }
                None => i += 1,
            }
        }
    }

    /// Longest-match, token-boundary, case-insensitive lookup over the text and
    /// then the user location. A name shared by several entries resolves to
    /// the most populous one.
    pub fn extract_candidates(&self, text: &str, user_location: Option<&str>) -> Vec<GazetteerEntry> {
        let text_tokens = tokenize(text);
        let mut hits = Vec::new();
        self.scan(&text_tokens, 0, &mut hits);
        if let Some(loc) = user_location {
            self.scan(&tokenize(loc), text_tokens.len(), &mut hits);
        }
        hits.sort_by(|a, b| {
            a.0.cmp(&b.0)
                .then_with(|| self.entries[a.1].name.cmp(&self.entries[b.1].name))
        });
        let mut seen = HashSet::new();
        hits.into_iter()
            .filter(|(_, e)| seen.insert(*e))
            .map(|(_, e)| self.entries[e].clone())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeoSource {
    Native,
    Inferred,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Chosen {
    Entry(GazetteerEntry),
    Native(GeoPoint),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoResolution {
    pub post_id: String,
    pub candidates: Vec<GazetteerEntry>,
    pub chosen: Chosen,
    pub country: String,
    pub source: GeoSource,
    pub display_name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnresolvedReason {
    NoCandidates,
    NativeUnmatched,
}

/// Country for a chosen location. Native points go through the boundary table
/// first (when given), then the nearest entry within 100 km.
pub fn country_of(
    chosen: &Chosen,
    gazetteer: &Gazetteer,
    boundaries: Option<&CountryBoundaries>,
) -> std::result::Result<(String, String), UnresolvedReason> {
    match chosen {
        Chosen::Entry(e) => Ok((e.country.clone(), format!("{}, {}", e.name, e.country))),
        Chosen::Native(p) => {
            if let Some(code) = boundaries.and_then(|b| b.locate(*p)) {
                let near = gazetteer
                    .nearest_within(*p, NATIVE_RADIUS_KM)
                    .filter(|(e, _)| e.country == code);
                let display = match near {
                    Some((e, _)) => format!("{}, {}", e.name, code),
                    None => code.to_string(),
                };
                return Ok((code.to_string(), display));
            }
            gazetteer
                .nearest_within(*p, NATIVE_RADIUS_KM)
                .map(|(e, _)| (e.country.clone(), format!("{}, {}", e.name, e.country)))
                .ok_or(UnresolvedReason::NativeUnmatched)
        }
    }
}

fn post_rng(seed: u64, post_id: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(post_id.as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

#[derive(Debug, Clone, Default)]
pub struct Geocoder<'a> {
    pub gazetteer: Option<&'a Gazetteer>,
    pub boundaries: Option<&'a CountryBoundaries>,
    pub seed: u64,
}

impl<'a> Geocoder<'a> {
    pub fn new(gazetteer: &'a Gazetteer, seed: u64) -> Self {
        Geocoder {
            gazetteer: Some(gazetteer),
            boundaries: None,
            seed,
        }
    }

    pub fn with_boundaries(mut self, boundaries: &'a CountryBoundaries) -> Self {
        self.boundaries = Some(boundaries);
        self
    }

    fn gazetteer(&self) -> Result<&'a Gazetteer> {
        match self.gazetteer {
            Some(g) if !g.is_empty() => Ok(g),
            _ => Err(Error::contract("gazetteer not loaded")),
        }
    }

    pub fn resolve(
        &self,
        record: &PostRecord,
    ) -> Result<std::result::Result<GeoResolution, UnresolvedReason>> {
        let gaz = self.gazetteer()?;
        if let Some(point) = record.native_geo {
            let chosen = Chosen::Native(point);
            return Ok(country_of(&chosen, gaz, self.boundaries).map(|(country, display_name)| {
                GeoResolution {
                    post_id: record.post_id.clone(),
                    candidates: Vec::new(),
                    chosen,
                    country,
                    source: GeoSource::Native,
                    display_name,
                }
            }));
        }
        let candidates = gaz.extract_candidates(&record.text, record.user_location.as_deref());
        if candidates.is_empty() {
            return Ok(Err(UnresolvedReason::NoCandidates));
        }
        let pick = post_rng(self.seed, &record.post_id).gen_range(0..candidates.len());
        let chosen = Chosen::Entry(candidates[pick].clone());
        let (country, display_name) =
            country_of(&chosen, gaz, self.boundaries).expect("entries always carry a country");
        Ok(Ok(GeoResolution {
            post_id: record.post_id.clone(),
            candidates,
            chosen,
            country,
            source: GeoSource::Inferred,
            display_name,
        }))
    }

    pub fn resolve_all(&self, records: &[PostRecord]) -> Result<GeocodeOutcome> {
        let mut out = GeocodeOutcome::default();
        for r in records {
            match self.resolve(r)? {
                Ok(res) => out.resolved.push((r.clone(), res)),
                Err(reason) => out.unresolved.push((r.clone(), reason)),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Default)]
pub struct GeocodeOutcome {
    pub resolved: Vec<(PostRecord, GeoResolution)>,
    pub unresolved: Vec<(PostRecord, UnresolvedReason)>,
}

impl GeocodeOutcome {
    pub fn native_count(&self) -> usize {
        self.resolved
            .iter()
            .filter(|(_, r)| r.source == GeoSource::Native)
            .count()
    }
}
