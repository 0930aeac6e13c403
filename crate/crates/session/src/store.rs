//! Flat-file persistence: `<id>.jsonl` holds one checksummed event per line,
//! `<id>.meta.json` the creation metadata.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::event::SessionEvent;
use crate::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub id: String,
    pub created_at: String,
    #[serde(default)]
    pub request_token: Option<String>,
}

#[derive(Serialize)]
struct LineOut<'a> {
    crc: u32,
    event: &'a RawValue,
}

#[derive(Deserialize)]
struct LineIn<'a> {
    crc: u32,
    #[serde(borrow)]
    event: &'a RawValue,
}

/// Serializes one log line (without the newline).
pub fn encode_line(event: &SessionEvent) -> String {
    let body = serde_json::to_string(event).expect("events serialize");
    let raw = RawValue::from_string(body).expect("valid json");
    let crc = crc32fast::hash(raw.get().as_bytes());
    serde_json::to_string(&LineOut { crc, event: &raw }).expect("line serializes")
}

/// Parses and verifies one log line.
pub fn decode_line(line: &str) -> Option<SessionEvent> {
    let parsed: LineIn<'_> = serde_json::from_str(line).ok()?;
    if crc32fast::hash(parsed.event.get().as_bytes()) != parsed.crc {
        return None;
    }
    serde_json::from_str(parsed.event.get()).ok()
}

/// Events recovered from a log file.
#[derive(Debug)]
pub struct Recovered {
    pub events: Vec<SessionEvent>,
    /// Bytes of a torn or corrupt final line that were cut off.
    pub dropped_bytes: usize,
}

/// Append handle for one session log.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    pub fn create(dir: &Path, meta: &SessionMeta) -> Result<Self, ServiceError> {
        let meta_path = dir.join(format!("{}.meta.json", meta.id));
        let tmp = dir.join(format!("{}.meta.json.tmp", meta.id));
        fs::write(&tmp, serde_json::to_vec_pretty(meta).expect("meta serializes"))?;
        fs::rename(&tmp, &meta_path)?;
        let path = dir.join(format!("{}.jsonl", meta.id));
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self { path, file })
    }

    /// Opens an existing log, truncating a torn final line.
    pub fn open(path: &Path) -> Result<(Self, Recovered), ServiceError> {
        let bytes = fs::read(path)?;
        let mut events = Vec::new();
        let mut good_len = 0usize;
        let mut pos = 0usize;
        while pos < bytes.len() {
            let end = bytes[pos..].iter().position(|&b| b == b'\n').map(|k| pos + k);
            let line_end = end.unwrap_or(bytes.len());
            let decoded = std::str::from_utf8(&bytes[pos..line_end]).ok().and_then(decode_line);
            match (decoded, end) {
                (Some(ev), Some(_)) => {
                    events.push(ev);
                    pos = line_end + 1;
                    good_len = pos;
                }
                // Last line without its newline, or failing its checksum.
                (_, None) => break,
                (None, Some(e)) if e + 1 == bytes.len() => break,
                (None, Some(_)) => {
                    return Err(ServiceError::Corrupt(format!("{}: bad line {}", path.display(), events.len() + 1)))
                }
            }
        }
        let dropped_bytes = bytes.len() - good_len;
        let file = OpenOptions::new().append(true).open(path)?;
        if dropped_bytes > 0 {
            file.set_len(good_len as u64)?;
            file.sync_data()?;
        }
        Ok((Self { path: path.to_path_buf(), file }, Recovered { events, dropped_bytes }))
    }

    /// Appends one event as a single write, then syncs.
    pub fn append(&mut self, event: &SessionEvent) -> io::Result<()> {
        let mut line = encode_line(event);
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.sync_data()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

pub fn read_meta(path: &Path) -> Result<SessionMeta, ServiceError> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| ServiceError::Corrupt(format!("{}: {e}", path.display())))
}
