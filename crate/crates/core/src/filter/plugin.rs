use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{read_jsonl, PostRecord};

pub struct FilterInput<'a> {
    pub record: &'a PostRecord,
    pub image_path: Option<PathBuf>,
}

impl<'a> FilterInput<'a> {
    pub fn new(record: &'a PostRecord, image_root: Option<&Path>) -> Self {
        let image_path = record.image_path.as_ref().map(|p| match image_root {
            Some(root) => root.join(p),
            None => p.clone(),
        });
        FilterInput { record, image_path }
    }
}

/// A relevance classifier. `score` is the confidence that the image is
/// relevant; the record is kept when it reaches `threshold`.
pub trait FilterPlugin: Send + Sync {
    fn name(&self) -> &str;
    fn threshold(&self) -> f64;
    fn score(&self, input: &FilterInput<'_>) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterRole {
    /// photo vs. meme/cartoon/graph
    Photo,
    /// safe vs. not-safe-for-work
    Nsfw,
    /// public vs. private scene
    Scene,
    /// at least `min_people` people visible
    Person,
}

pub const PUBLIC_SCENES: [&str; 12] = [
    "public", "street", "square", "park", "shop", "supermarket", "market", "hospital", "outdoors",
    "station", "beach", "transport",
];

/// Ground-truth sidecar annotations for one image.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImageLabels {
    pub post_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_photo: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nsfw: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub people: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<String>,
}

pub fn is_public_scene(scene: &str) -> bool {
    let s = scene.to_lowercase();
    PUBLIC_SCENES.contains(&s.as_str())
}

pub type LabelSet = Arc<HashMap<String, ImageLabels>>;

pub fn load_labels(path: &Path) -> Result<LabelSet> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let labels: Vec<ImageLabels> = read_jsonl(BufReader::new(file))?;
    Ok(Arc::new(labels.into_iter().map(|l| (l.post_id.clone(), l)).collect()))
}

/// Reads the answer straight from ground-truth labels.
#[derive(Debug, Clone)]
pub struct LabelOracle {
    name: String,
    role: FilterRole,
    threshold: f64,
    min_people: u32,
    labels: LabelSet,
}

impl LabelOracle {
    pub fn new(name: impl Into<String>, role: FilterRole, labels: LabelSet) -> Self {
        LabelOracle {
            name: name.into(),
            role,
            threshold: super::DEFAULT_THRESHOLD,
            min_people: 2,
            labels,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn with_min_people(mut self, n: u32) -> Self {
        self.min_people = n;
        self
    }
}

impl FilterPlugin for LabelOracle {
    fn name(&self) -> &str {
        &self.name
    }

    fn threshold(&self) -> f64 {
        self.threshold
    }

    fn score(&self, input: &FilterInput<'_>) -> Result<f64> {
        let id = &input.record.post_id;
        let missing = |field: &str| Error::Filter {
            filter: self.name.clone(),
            reason: format!("no `{field}` label for post {id}"),
        };
        let labels = self.labels.get(id).ok_or_else(|| missing("any"))?;
        let relevant = match self.role {
            FilterRole::Photo => labels.is_photo.ok_or_else(|| missing("is_photo"))?,
            FilterRole::Nsfw => !labels.nsfw.ok_or_else(|| missing("nsfw"))?,
            FilterRole::Scene => is_public_scene(labels.scene.as_deref().ok_or_else(|| missing("scene"))?),
            FilterRole::Person => labels.people.ok_or_else(|| missing("people"))? >= self.min_people,
        };
        Ok(if relevant { 1.0 } else { 0.0 })
    }
}

#[derive(Serialize)]
struct PluginRequest<'a> {
    image_path: Option<&'a Path>,
    filter_name: &'a str,
}

#[derive(Deserialize)]
struct PluginResponse {
    score: Option<f64>,
    #[serde(default)]
    error: Option<String>,
}

struct ChildIo {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Drop for ChildIo {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A classifier living in a child process, spoken to with one JSON object per
/// line: request `{"image_path", "filter_name"}`, response `{"score"}`.
///
/// Requests are serialized over a single child; a crash or timeout kills it
/// and the next request starts a fresh one.
pub struct ExternalFilter {
    name: String,
    threshold: f64,
    command: Vec<String>,
    timeout: Duration,
    io: Mutex<Option<ChildIo>>,
}

impl ExternalFilter {
    pub fn new(name: impl Into<String>, command: Vec<String>) -> Result<Self> {
        if command.is_empty() {
            return Err(Error::invalid("external filter needs a command"));
        }
        Ok(ExternalFilter {
            name: name.into(),
            threshold: super::DEFAULT_THRESHOLD,
            command,
            timeout: Duration::from_secs(30),
            io: Mutex::new(None),
        })
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Filter {
            filter: self.name.clone(),
            reason: reason.into(),
        }
    }

    fn spawn(&self) -> Result<ChildIo> {
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| self.fail(format!("spawn failed: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(ChildIo {
            child,
            stdin,
            lines: rx,
        })
    }

    fn request(&self, io: &mut ChildIo, input: &FilterInput<'_>) -> Result<f64> {
        let req = PluginRequest {
            image_path: input.image_path.as_deref(),
            filter_name: &self.name,
        };
        let mut line = serde_json::to_vec(&req)?;
        line.push(b'\n');
        io.stdin
            .write_all(&line)
            .and_then(|_| io.stdin.flush())
            .map_err(|e| self.fail(format!("write failed: {e}")))?;
        let reply = match io.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => return Err(self.fail(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => return Err(self.fail("timed out")),
            Err(RecvTimeoutError::Disconnected) => return Err(self.fail("plugin exited")),
        };
        let resp: PluginResponse = serde_json::from_str(&reply)
            .map_err(|e| self.fail(format!("bad response `{reply}`: {e}")))?;
        if let Some(err) = resp.error {
            return Err(self.fail(err));
        }
        resp.score.ok_or_else(|| self.fail("response without score"))
    }
}

impl FilterPlugin for ExternalFilter {
    fn name(&self) -> &str {
        &self.name
    }

    fn threshold(&self) -> f64 {
        self.threshold
    }

    fn score(&self, input: &FilterInput<'_>) -> Result<f64> {
        let mut guard = self.io.lock().unwrap_or_else(|p| p.into_inner());
        if guard.is_none() {
            *guard = Some(self.spawn()?);
        }
        let io = guard.as_mut().expect("child present");
        let result = self.request(io, input);
        if matches!(&result, Err(Error::Filter { .. })) {
            // drop the child so a hung or dead process is not reused
            *guard = None;
        }
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::tests::post;

    fn labels(items: Vec<ImageLabels>) -> LabelSet {
        Arc::new(items.into_iter().map(|l| (l.post_id.clone(), l)).collect())
    }

    #[test]
    fn oracle_roles() {
        let set = labels(vec![
            ImageLabels {
                post_id: "meme".into(),
                is_photo: Some(false),
                people: Some(1),
                scene: Some("bedroom".into()),
                nsfw: Some(false),
            },
            ImageLabels {
                post_id: "crowd".into(),
                is_photo: Some(true),
                people: Some(2),
                scene: Some("street".into()),
                nsfw: Some(true),
            },
        ]);
        let meme = post("meme", "", 0);
        let crowd = post("crowd", "", 0);
        let score = |role, r: &PostRecord| {
            LabelOracle::new("f", role, set.clone())
                .score(&FilterInput::new(r, None))
                .unwrap()
        };
        assert_eq!(score(FilterRole::Photo, &meme), 0.0);
        assert_eq!(score(FilterRole::Person, &meme), 0.0);
        assert_eq!(score(FilterRole::Person, &crowd), 1.0);
        assert_eq!(score(FilterRole::Scene, &crowd), 1.0);
        assert_eq!(score(FilterRole::Scene, &meme), 0.0);
        assert_eq!(score(FilterRole::Nsfw, &crowd), 0.0);
        assert_eq!(score(FilterRole::Nsfw, &meme), 1.0);
    }

    #[test]
    fn oracle_missing_label_is_an_error() {
        let set = labels(vec![ImageLabels {
            post_id: "a".into(),
            ..Default::default()
        }]);
        let oracle = LabelOracle::new("photo", FilterRole::Photo, set);
        assert!(oracle.score(&FilterInput::new(&post("a", "", 0), None)).is_err());
        assert!(oracle.score(&FilterInput::new(&post("b", "", 0), None)).is_err());
    }

    fn sh(script: &str) -> Vec<String> {
        vec!["sh".into(), "-c".into(), script.into()]
    }

    #[test]
    fn external_plugin_round_trip() {
        let f = ExternalFilter::new("ext", sh(r#"while read line; do echo '{"score": 0.75}'; done"#)).unwrap();
        let r = post("a", "", 0);
        for _ in 0..3 {
            assert_eq!(f.score(&FilterInput::new(&r, None)).unwrap(), 0.75);
        }
    }

    #[test]
    fn external_plugin_sees_request() {
        // echoes 1.0 only when the request names the filter
        let script = r#"while read line; do case "$line" in *'"filter_name":"people"'*) echo '{"score":1.0}';; *) echo '{"score":0.0}';; esac; done"#;
        let f = ExternalFilter::new("people", sh(script)).unwrap();
        assert_eq!(f.score(&FilterInput::new(&post("a", "", 0), None)).unwrap(), 1.0);
    }

    #[test]
    fn external_plugin_crash_and_timeout() {
        let r = post("a", "", 0);
        let dead = ExternalFilter::new("dead", sh("exit 1")).unwrap();
        assert!(matches!(dead.score(&FilterInput::new(&r, None)), Err(Error::Filter { .. })));
        let slow = ExternalFilter::new("slow", sh("sleep 5"))
            .unwrap()
            .with_timeout(Duration::from_millis(100));
        assert!(matches!(slow.score(&FilterInput::new(&r, None)), Err(Error::Filter { .. })));
        let err = ExternalFilter::new("err", sh(r#"read l; echo '{"error":"boom"}'"#)).unwrap();
        assert!(matches!(err.score(&FilterInput::new(&r, None)), Err(Error::Filter { reason, .. }) if reason == "boom"));
    }
}
