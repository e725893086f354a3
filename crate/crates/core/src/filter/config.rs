use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{load_labels, ExternalFilter, FilterPlugin, FilterRole, LabelOracle, LabelSet};
use crate::error::{Error, Result};

/// One entry of a chain config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub name: String,
    pub kind: String,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub params: Value,
}

#[derive(Deserialize)]
struct OracleParams {
    role: FilterRole,
    labels: PathBuf,
    #[serde(default)]
    min_people: Option<u32>,
}

#[derive(Deserialize)]
struct ExternalParams {
    command: Vec<String>,
    #[serde(default)]
    timeout_ms: Option<u64>,
}

pub fn load_chain_config(path: &Path) -> Result<Vec<FilterSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Instantiates plugins; relative label paths resolve against `base_dir`.
pub fn build_chain(specs: &[FilterSpec], base_dir: &Path) -> Result<Vec<Box<dyn FilterPlugin>>> {
    let mut names = std::collections::HashSet::new();
    let mut label_cache: HashMap<PathBuf, LabelSet> = HashMap::new();
    let mut chain: Vec<Box<dyn FilterPlugin>> = Vec::with_capacity(specs.len());
    for spec in specs {
        if !names.insert(spec.name.as_str()) {
            return Err(Error::invalid(format!("duplicate filter name `{}`", spec.name)));
        }
        let threshold = spec.threshold.unwrap_or(super::DEFAULT_THRESHOLD);
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::invalid(format!("{}: threshold must lie in [0, 1]", spec.name)));
        }
        let bad = |e: serde_json::Error| Error::invalid(format!("{}: {e}", spec.name));
        match spec.kind.as_str() {
            "label_oracle" => {
                let p: OracleParams = serde_json::from_value(spec.params.clone()).map_err(bad)?;
                let path = base_dir.join(&p.labels);
                let labels = match label_cache.get(&path) {
                    Some(l) => l.clone(),
                    None => {
                        let l = load_labels(&path)?;
                        label_cache.insert(path, l.clone());
                        l
                    }
                };
                let mut oracle = LabelOracle::new(&spec.name, p.role, labels).with_threshold(threshold);
                if let Some(n) = p.min_people {
                    oracle = oracle.with_min_people(n);
                }
                chain.push(Box::new(oracle));
            }
            "external" => {
                let p: ExternalParams = serde_json::from_value(spec.params.clone()).map_err(bad)?;
                let mut f = ExternalFilter::new(&spec.name, p.command)?.with_threshold(threshold);
                if let Some(ms) = p.timeout_ms {
                    f = f.with_timeout(Duration::from_millis(ms));
                }
                chain.push(Box::new(f));
            }
            other => {
                return Err(Error::invalid(format!("{}: unknown filter kind `{other}`", spec.name)));
            }
        }
    }
    Ok(chain)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_oracle_and_external() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("labels.jsonl"), "{\"post_id\":\"a\",\"is_photo\":true}\n").unwrap();
        let cfg = r#"[
            {"name": "photo", "kind": "label_oracle", "params": {"role": "photo", "labels": "labels.jsonl"}},
            {"name": "people", "kind": "label_oracle", "threshold": 0.9, "params": {"role": "person", "labels": "labels.jsonl", "min_people": 3}},
            {"name": "ext", "kind": "external", "params": {"command": ["cat"], "timeout_ms": 50}}
        ]"#;
        let specs: Vec<FilterSpec> = serde_json::from_str(cfg).unwrap();
        let chain = build_chain(&specs, dir.path()).unwrap();
        let names: Vec<_> = chain.iter().map(|f| f.name()).collect();
        assert_eq!(names, ["photo", "people", "ext"]);
        assert_eq!(chain[1].threshold(), 0.9);
    }

    #[test]
    fn rejects_bad_configs() {
        let dir = tempfile::tempdir().unwrap();
        let parse = |s: &str| serde_json::from_str::<Vec<FilterSpec>>(s).unwrap();
        let unknown = parse(r#"[{"name": "x", "kind": "cnn"}]"#);
        assert!(build_chain(&unknown, dir.path()).is_err());
        let dup = parse(r#"[{"name": "x", "kind": "external", "params": {"command": ["cat"]}},
                           {"name": "x", "kind": "external", "params": {"command": ["cat"]}}]"#);
        assert!(build_chain(&dup, dir.path()).is_err());
        let missing = parse(r#"[{"name": "x", "kind": "label_oracle", "params": {"role": "photo", "labels": "nope.jsonl"}}]"#);
        assert!(build_chain(&missing, dir.path()).is_err());
        let thr = parse(r#"[{"name": "x", "kind": "external", "threshold": 2.0, "params": {"command": ["cat"]}}]"#);
        assert!(build_chain(&thr, dir.path()).is_err());
    }
}
