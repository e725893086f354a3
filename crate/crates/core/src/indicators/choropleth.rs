use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use super::IndicatorTable;
use crate::boundaries::CountryBoundaries;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ChoroplethFiles {
    pub csv: PathBuf,
    pub geojson: PathBuf,
    pub html: PathBuf,
    /// countries kept in the CSV but missing from the boundary file
    pub warnings: Vec<String>,
}

/// `country,option,percentage,count,n_valid`, one line per country and option.
pub fn choropleth_csv(table: &IndicatorTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["country", "option", "percentage", "count", "n_valid"])?;
    for row in &table.rows {
        for opt in &table.options {
            w.write_record([
                row.country.as_str(),
                opt.as_str(),
                &row.pct(opt).to_string(),
                &row.counts.get(opt).copied().unwrap_or(0).to_string(),
                &row.n_valid.to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// One feature per table row found in the boundary file, geometry copied from
/// it and indicator values added as properties.
pub fn choropleth_geojson(table: &IndicatorTable, boundaries: Option<&CountryBoundaries>) -> (Value, Vec<String>) {
    let mut features = Vec::new();
    let mut warnings = Vec::new();
    for row in &table.rows {
        let Some(feature) = boundaries.and_then(|b| b.feature(&row.country)) else {
            warnings.push(format!("{}: no boundary feature", row.country));
            continue;
        };
        let mut props = Map::new();
        props.insert("iso_a2".into(), json!(row.country));
        props.insert("question_id".into(), json!(table.question_id));
        props.insert("n_valid".into(), json!(row.n_valid));
        if table.options.iter().any(|o| o == "Yes") {
            props.insert("yes_pct".into(), json!(row.pct("Yes")));
        }
        props.insert("percentages".into(), json!(row.percentages));
        props.insert("counts".into(), json!(row.counts));
        if let Some(name) = feature.pointer("/properties/name").cloned() {
            props.insert("name".into(), name);
        }
        features.push(json!({
            "type": "Feature",
            "properties": Value::Object(props),
            "geometry": feature.get("geometry").cloned().unwrap_or(Value::Null),
        }));
    }
    (json!({"type": "FeatureCollection", "features": features}), warnings)
}

fn colour(p: f64) -> String {
    // pale yellow to deep blue
    let (a, b) = ([255.0, 247.0, 188.0], [8.0, 48.0, 107.0]);
    let mix = |i: usize| (a[i] + (b[i] - a[i]) * p.clamp(0.0, 1.0)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(0), mix(1), mix(2))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Standalone page: an equirectangular SVG map coloured by the first option's
/// share, with counts on hover, and the same numbers as a table.
pub fn choropleth_html(table: &IndicatorTable, boundaries: Option<&CountryBoundaries>) -> String {
    let (w, h) = (960.0, 480.0);
    let lead = table.options.first().cloned().unwrap_or_default();
    let mut svg = String::new();
    if let Some(b) = boundaries {
        for code in b.codes() {
            let row = table.row(code);
            let mut d = String::new();
            for ring in b.rings(code) {
                for (i, (lon, lat)) in ring.iter().enumerate() {
                    let x = (lon + 180.0) / 360.0 * w;
                    let y = (90.0 - lat) / 180.0 * h;
                    let _ = write!(d, "{}{x:.2},{y:.2}", if i == 0 { "M" } else { "L" });
                }
                d.push('Z');
            }
            let (fill, title) = match row {
                Some(r) => {
                    let detail: Vec<String> = table
                        .options
                        .iter()
                        .map(|o| format!("{o}: {} ({:.1}%)", r.counts.get(o).copied().unwrap_or(0), 100.0 * r.pct(o)))
                        .collect();
                    (colour(r.pct(&lead)), format!("{code} (n={}) {}", r.n_valid, detail.join(", ")))
                }
                None => ("#dddddd".to_string(), format!("{code}: no data")),
            };
            let _ = writeln!(
                svg,
                r#"<path d="{d}" fill="{fill}" fill-rule="evenodd"><title>{}</title></path>"#,
                escape(&title)
            );
        }
    }
    let mut rows = String::new();
    for r in &table.rows {
        let cells: String = table
            .options
            .iter()
            .map(|o| format!("<td>{:.1}% ({})</td>", 100.0 * r.pct(o), r.counts.get(o).copied().unwrap_or(0)))
            .collect();
        let _ = writeln!(rows, "<tr><td>{}</td><td>{}</td>{cells}</tr>", escape(&r.country), r.n_valid);
    }
    let heads: String = table.options.iter().map(|o| format!("<th>{}</th>", escape(o))).collect();
    format!(
        r#"<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>{q} by country</title>
<style>
body {{ font-family: sans-serif; margin: 1.5em; }}
svg {{ width: 100%; max-width: 960px; background: #eef4f8; }}
path {{ stroke: #555; stroke-width: 0.4; }}
path:hover {{ stroke: #000; stroke-width: 1.5; }}
table {{ border-collapse: collapse; margin-top: 1em; }}
td, th {{ border: 1px solid #ccc; padding: 2px 8px; text-align: right; }}
</style>
</head>
<body>
<h1>{q}: share answering "{lead}"</h1>
<p>Countries with at least {t} valid answers. Hover a country for counts.</p>
<svg viewBox="0 0 {w} {h}" xmlns="http://www.w3.org/2000/svg">
{svg}</svg>
<table>
<tr><th>country</th><th>n</th>{heads}</tr>
{rows}</table>
</body>
</html>
"#,
        q = escape(&table.question_id),
        lead = escape(&lead),
        t = table.threshold,
    )
}

/// Writes `<stem>.csv`, `<stem>.geojson` and `<stem>.html` into `out_dir`.
pub fn export_choropleth(
    table: &IndicatorTable,
    boundaries: Option<&CountryBoundaries>,
    out_dir: &Path,
    stem: &str,
) -> Result<ChoroplethFiles> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let write = |ext: &str, body: &[u8]| -> Result<PathBuf> {
        let path = out_dir.join(format!("{stem}.{ext}"));
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    };
    let (geo, warnings) = choropleth_geojson(table, boundaries);
    Ok(ChoroplethFiles {
        csv: write("csv", choropleth_csv(table)?.as_bytes())?,
        geojson: write("geojson", &serde_json::to_vec_pretty(&geo)?)?,
        html: write("html", choropleth_html(table, boundaries).as_bytes())?,
        warnings,
    })
}
