//! Append-only JSON-lines event log.
//!
//! Each line is one [`EventLogEntry`]; `seq` starts at 1 and increases by
//! exactly one. A final line without its newline is a torn write and is
//! ignored on read (and cut off when a file log is reopened).

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    TaskCreated,
    AnswerSubmitted,
    TaskCompleted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLogEntry {
    pub seq: u64,
    pub kind: EventKind,
    pub payload: serde_json::Value,
    pub at: DateTime<Utc>,
}

pub trait LogSink: Send {
    fn append(&mut self, entry: &EventLogEntry) -> io::Result<()>;
}

fn encode(entry: &EventLogEntry) -> io::Result<Vec<u8>> {
    let mut line = serde_json::to_vec(entry).map_err(io::Error::other)?;
    line.push(b'\n');
    Ok(line)
}

/// Discards everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullLog;

impl LogSink for NullLog {
    fn append(&mut self, _: &EventLogEntry) -> io::Result<()> {
        Ok(())
    }
}

/// In-memory log; clones share the same buffer.
#[derive(Debug, Default, Clone)]
pub struct MemoryLog {
    buf: Arc<Mutex<Vec<u8>>>,
}

impl MemoryLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&self) -> Vec<u8> {
        self.buf.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn len(&self) -> usize {
        self.buf.lock().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl LogSink for MemoryLog {
    fn append(&mut self, entry: &EventLogEntry) -> io::Result<()> {
        let line = encode(entry)?;
        self.buf
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .extend_from_slice(&line);
        Ok(())
    }
}

/// File-backed log. Every append is a single write of a full line followed by
/// a flush, and an fsync when `sync` is set.
#[derive(Debug)]
pub struct FileLog {
    path: PathBuf,
    file: File,
    sync: bool,
}

impl FileLog {
    /// Opens (creating if needed) and returns the entries already present.
    pub fn open(path: &Path, sync: bool) -> Result<(Self, Vec<EventLogEntry>)> {
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(Error::io(path, e)),
        };
        let read = read_entries(&bytes)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        if read.valid_len < bytes.len() {
            file.set_len(read.valid_len as u64).map_err(|e| Error::io(path, e))?;
        }
        Ok((
            FileLog {
                path: path.to_path_buf(),
                file,
                sync,
            },
            read.entries,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl LogSink for FileLog {
    fn append(&mut self, entry: &EventLogEntry) -> io::Result<()> {
        self.file.write_all(&encode(entry)?)?;
        self.file.flush()?;
        if self.sync {
            self.file.sync_data()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReadLog {
    pub entries: Vec<EventLogEntry>,
    /// bytes covered by complete lines
    pub valid_len: usize,
}

/// Parses complete lines and checks that `seq` runs 1, 2, 3, ...
pub fn read_entries(bytes: &[u8]) -> Result<ReadLog> {
    let mut out = ReadLog::default();
    let mut start = 0;
    while let Some(nl) = bytes[start..].iter().position(|&b| b == b'\n') {
        let line = &bytes[start..start + nl];
        let expected = out.entries.len() as u64 + 1;
        if !line.iter().all(u8::is_ascii_whitespace) {
            let entry: EventLogEntry = serde_json::from_slice(line).map_err(|e| Error::Corruption {
                seq: expected,
                reason: format!("unparseable line: {e}"),
            })?;
            check_next(expected - 1, entry.seq)?;
            out.entries.push(entry);
        }
        start += nl + 1;
        out.valid_len = start;
    }
    Ok(out)
}

pub(crate) fn check_next(last: u64, seq: u64) -> Result<()> {
    if seq == last + 1 {
        Ok(())
    } else if seq <= last {
        Err(Error::Corruption {
            seq,
            reason: format!("duplicate or out-of-order seq after {last}"),
        })
    } else {
        Err(Error::Corruption {
            seq,
            reason: format!("gap: expected {}", last + 1),
        })
    }
}
