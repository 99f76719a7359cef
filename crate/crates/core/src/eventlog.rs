//! Append-only line-delimited JSON event log with snapshot files.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::config::Durability;
use crate::engine::{EventRecord, State};
use crate::error::{Error, Result};

pub const LOG_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
    next_seq: u64,
    durability: Durability,
}

/// Result of reading a log from disk.
#[derive(Debug, Default)]
pub struct Recovered {
    pub records: Vec<EventRecord>,
    /// Bytes dropped from a corrupt tail, if any.
    pub truncated_bytes: u64,
}

impl EventLog {
    /// Opens (creating if needed) the log in `dir`, returning every valid
    /// record. A corrupt final record is truncated with a warning; a
    /// corrupt record followed by valid ones, or a sequence gap, is an error.
    pub fn open(dir: &Path, durability: Durability) -> Result<(EventLog, Recovered)> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOG_FILE);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let rec = scan(&bytes)?;
        let valid_len = bytes.len() as u64 - rec.truncated_bytes;
        if rec.truncated_bytes > 0 {
            warn!(path = %path.display(), dropped = rec.truncated_bytes, "truncating corrupt event log tail");
            let f = OpenOptions::new().write(true).open(&path)?;
            f.set_len(valid_len)?;
            f.sync_all()?;
        }
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        if valid_len > 0 && bytes[valid_len as usize - 1] != b'\n' {
            file.write_all(b"\n")?;
        }
        let next_seq = rec.records.last().map_or(1, |r| r.seq + 1);
        Ok((EventLog { path, file, next_seq, durability }, rec))
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends one record; its seq must be the next in line.
    pub fn append(&mut self, rec: &EventRecord) -> Result<()> {
        if rec.seq != self.next_seq {
            return Err(Error::conflict(
                "seq_mismatch",
                format!("expected seq {}, got {}", self.next_seq, rec.seq),
            ));
        }
        let mut line = serde_json::to_vec(rec)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        match self.durability {
            Durability::Fsync => self.file.sync_data()?,
            Durability::Flush => self.file.flush()?,
        }
        self.next_seq += 1;
        Ok(())
    }
}

fn scan(bytes: &[u8]) -> Result<Recovered> {
    let mut out = Recovered::default();
    let mut offset = 0usize;
    let mut lineno = 0usize;
    while offset < bytes.len() {
        lineno += 1;
        let end = bytes[offset..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |p| offset + p);
        let line = &bytes[offset..end];
        let next = (end + 1).min(bytes.len());
        if line.iter().all(u8::is_ascii_whitespace) {
            offset = next;
            continue;
        }
        match serde_json::from_slice::<EventRecord>(line).map_err(|e| e.to_string()).and_then(|r| {
            r.event().map_err(|e| e.to_string())?;
            Ok(r)
        }) {
            Ok(r) => {
                let expected = out.records.last().map_or(1, |p: &EventRecord| p.seq + 1);
                if r.seq != expected {
                    return Err(Error::CorruptLog {
                        line: lineno,
                        message: format!("sequence gap: expected {expected}, found {}", r.seq),
                    });
                }
                out.records.push(r);
            }
            Err(msg) => {
                let rest_valid = bytes[next..]
                    .split(|&b| b == b'\n')
                    .any(|l| serde_json::from_slice::<EventRecord>(l).is_ok());
                if rest_valid {
                    return Err(Error::CorruptLog { line: lineno, message: msg });
                }
                out.truncated_bytes = (bytes.len() - offset) as u64;
                return Ok(out);
            }
        }
        offset = next;
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    seq: u64,
    digest: String,
    state: State,
}

/// Writes a snapshot atomically (temp file, then rename).
pub fn write_snapshot(dir: &Path, state: &State) -> Result<()> {
    let snap = Snapshot {
        seq: state.last_seq,
        digest: state.digest(),
        state: state.clone(),
    };
    let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        serde_json::to_writer(&mut w, &snap)?;
        w.flush()?;
        w.get_ref().sync_all()?;
    }
    fs::rename(&tmp, dir.join(SNAPSHOT_FILE))?;
    Ok(())
}

/// Loads the snapshot if present and self-consistent. Unusable snapshots
/// are ignored with a warning; the log is always authoritative.
pub fn read_snapshot(dir: &Path) -> Option<State> {
    let path = dir.join(SNAPSHOT_FILE);
    let bytes = fs::read(&path).ok()?;
    let snap: Snapshot = match serde_json::from_slice(&bytes) {
        Ok(s) => s,
        Err(e) => {
            warn!(path = %path.display(), error = %e, "ignoring unreadable snapshot");
            return None;
        }
    };
    let mut state = snap.state;
    if state.last_seq != snap.seq || state.rebuild_registry().is_err() || state.digest() != snap.digest {
        warn!(path = %path.display(), "ignoring inconsistent snapshot");
        return None;
    }
    Some(state)
}
