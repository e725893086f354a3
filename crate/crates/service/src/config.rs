//! Config file shared by every subcommand. Flags override file values;
//! relative paths in the file resolve against the file's directory.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use sensepipe_core::crowd::VetoMode;

pub const DATA_DIR_ENV: &str = "SENSEPIPE_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "sensepipe-data";
pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad TOML in {path}: {source}")]
    Toml {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("bad JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data_dir: Option<PathBuf>,

    pub input: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub keywords: Option<Vec<String>>,
    pub from: Option<DateTime<Utc>>,
    pub to: Option<DateTime<Utc>>,
    pub phash_threshold: Option<u32>,
    pub chain: Option<PathBuf>,
    pub optimize_order: Option<bool>,
    pub profile_sample: Option<usize>,
    pub gazetteer: Option<PathBuf>,
    pub boundaries: Option<PathBuf>,
    pub seed: Option<u64>,
    pub redundancy: Option<u32>,

    pub addr: Option<String>,
    pub ui_dir: Option<PathBuf>,
    pub snapshot_every: Option<u64>,
    /// fsync every log append
    pub sync: Option<bool>,
    pub veto: Option<VetoMode>,

    pub question: Option<String>,
    pub threshold: Option<usize>,
    pub survey: Option<PathBuf>,
}

impl Config {
    /// `.json` files are read as JSON, anything else as TOML.
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut cfg: Config = if is_json {
            serde_json::from_str(&text).map_err(|source| ConfigError::Json {
                path: path.to_path_buf(),
                source,
            })?
        } else {
            toml::from_str(&text).map_err(|source| ConfigError::Toml {
                path: path.to_path_buf(),
                source,
            })?
        };
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        for p in [
            &mut self.data_dir,
            &mut self.input,
            &mut self.images,
            &mut self.chain,
            &mut self.gazetteer,
            &mut self.boundaries,
            &mut self.ui_dir,
            &mut self.survey,
        ] {
            fix(p);
        }
    }

    /// Flag, then environment, then file, then `./sensepipe-data`.
    pub fn data_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .or_else(|| self.data_dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR))
    }
}
