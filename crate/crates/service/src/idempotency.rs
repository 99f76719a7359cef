//! Replay store for `Idempotency-Key` retries.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tracing::warn;

pub const IDEMPOTENCY_FILE: &str = "idempotency.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stored {
    pub key: String,
    /// Hash of method, path, query and body of the first request.
    pub fingerprint: String,
    pub status: u16,
    pub body: Value,
}

#[derive(Debug, Default)]
pub struct IdempotencyStore {
    entries: HashMap<String, Stored>,
    path: Option<PathBuf>,
}

impl IdempotencyStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads earlier results from `dir`; unreadable lines are skipped.
    pub fn open(dir: &Path) -> std::io::Result<Self> {
        let path = dir.join(IDEMPOTENCY_FILE);
        let mut entries = HashMap::new();
        if let Ok(f) = File::open(&path) {
            for (i, line) in BufReader::new(f).lines().enumerate() {
                match serde_json::from_str::<Stored>(&line?) {
                    Ok(s) => {
                        entries.insert(s.key.clone(), s);
                    }
                    Err(e) => warn!(line = i + 1, error = %e, "skipping unreadable idempotency record"),
                }
            }
        }
        Ok(IdempotencyStore { entries, path: Some(path) })
    }

    pub fn get(&self, key: &str) -> Option<&Stored> {
        self.entries.get(key)
    }

    pub fn insert(&mut self, s: Stored) -> std::io::Result<()> {
        if let Some(path) = &self.path {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            let mut line = serde_json::to_vec(&s).map_err(std::io::Error::other)?;
            line.push(b'\n');
            f.write_all(&line)?;
            f.sync_data()?;
        }
        self.entries.insert(s.key.clone(), s);
        Ok(())
    }
}
