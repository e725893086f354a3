//! Country boundary polygons loaded from a GeoJSON FeatureCollection.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::ingest::GeoPoint;

/// Property names probed for the ISO alpha-2 code, in order.
pub const CODE_KEYS: [&str; 5] = ["iso_a2", "ISO_A2", "iso2", "ISO2", "code"];

/// Outer ring followed by holes; each ring is a list of (lon, lat).
type Polygon = Vec<Vec<(f64, f64)>>;

#[derive(Debug, Clone, Default)]
pub struct CountryBoundaries {
    features: BTreeMap<String, Value>,
    polygons: Vec<(String, Polygon)>,
}

fn feature_code(feature: &Value) -> Option<String> {
    let props = feature.get("properties");
    CODE_KEYS
        .iter()
        .find_map(|k| props.and_then(|p| p.get(*k)).and_then(Value::as_str))
        .or_else(|| feature.get("id").and_then(Value::as_str))
        .map(|s| s.to_ascii_uppercase())
}

fn parse_ring(v: &Value) -> Option<Vec<(f64, f64)>> {
    v.as_array()?
        .iter()
        .map(|pt| {
            let pt = pt.as_array()?;
            Some((pt.first()?.as_f64()?, pt.get(1)?.as_f64()?))
        })
        .collect()
}

fn parse_polygon(v: &Value) -> Option<Polygon> {
    v.as_array()?.iter().map(parse_ring).collect()
}

fn ring_contains(ring: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut inside = false;
    let n = ring.len();
    if n < 3 {
        return false;
    }
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = ring[i];
        let (xj, yj) = ring[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

impl CountryBoundaries {
    pub fn from_geojson(doc: &Value) -> Result<Self> {
        let features = doc
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::invalid("boundary file is not a FeatureCollection"))?;
        let mut out = CountryBoundaries::default();
        for feature in features {
            let Some(code) = feature_code(feature) else {
                continue;
            };
            let geom = feature.get("geometry");
            let kind = geom.and_then(|g| g.get("type")).and_then(Value::as_str);
            let coords = geom.and_then(|g| g.get("coordinates"));
            match (kind, coords) {
                (Some("Polygon"), Some(c)) => {
                    if let Some(p) = parse_polygon(c) {
                        out.polygons.push((code.clone(), p));
                    }
                }
                (Some("MultiPolygon"), Some(c)) => {
                    for p in c.as_array().into_iter().flatten().filter_map(parse_polygon) {
                        out.polygons.push((code.clone(), p));
                    }
                }
                _ => {}
            }
            out.features.insert(code, feature.clone());
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_geojson(&serde_json::from_str(&text)?)
    }

    pub fn feature(&self, code: &str) -> Option<&Value> {
        self.features.get(code)
    }

    /// All rings (outer and holes) of a country, as (lon, lat) lists.
    pub fn rings(&self, code: &str) -> Vec<&[(f64, f64)]> {
        self.polygons
            .iter()
            .filter(|(c, _)| c == code)
            .flat_map(|(_, poly)| poly.iter().map(Vec::as_slice))
            .collect()
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.features.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Country whose polygon contains the point (first match in file order).
    pub fn locate(&self, p: GeoPoint) -> Option<&str> {
        self.polygons.iter().find_map(|(code, poly)| {
            let (outer, holes) = poly.split_first()?;
            let inside = ring_contains(outer, p.lon, p.lat)
                && !holes.iter().any(|h| ring_contains(h, p.lon, p.lat));
            inside.then_some(code.as_str())
        })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use serde_json::json;

    pub(crate) fn square(code: &str, lon0: f64, lat0: f64, size: f64) -> Value {
        json!({
            "type": "Feature",
            "properties": {"iso_a2": code},
            "geometry": {"type": "Polygon", "coordinates": [[
                [lon0, lat0], [lon0 + size, lat0], [lon0 + size, lat0 + size],
                [lon0, lat0 + size], [lon0, lat0]
            ]]}
        })
    }

    #[test]
    fn locates_points_and_respects_holes() {
        let donut = json!({
            "type": "Feature",
            "properties": {"ISO_A2": "dn"},
            "geometry": {"type": "MultiPolygon", "coordinates": [[
                [[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0], [0.0, 0.0]],
                [[4.0, 4.0], [6.0, 4.0], [6.0, 6.0], [4.0, 6.0], [4.0, 4.0]]
            ]]}
        });
        let doc = json!({"type": "FeatureCollection", "features": [donut, square("IT", 20.0, 20.0, 5.0)]});
        let b = CountryBoundaries::from_geojson(&doc).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b.locate(GeoPoint { lat: 1.0, lon: 1.0 }), Some("DN"));
        assert_eq!(b.locate(GeoPoint { lat: 5.0, lon: 5.0 }), None);
        assert_eq!(b.locate(GeoPoint { lat: 22.0, lon: 21.0 }), Some("IT"));
        assert_eq!(b.locate(GeoPoint { lat: -40.0, lon: -30.0 }), None);
    }

    #[test]
    fn rejects_non_collection() {
        assert!(CountryBoundaries::from_geojson(&json!({"type": "Feature"})).is_err());
    }
}
