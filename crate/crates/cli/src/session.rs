//! Append-only JSON-lines log of review decisions.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    AcceptProposed,
    KeepObserved,
    Custom,
}

impl Decision {
    pub fn name(self) -> &'static str {
        match self {
            Decision::AcceptProposed => "accept_proposed",
            Decision::KeepObserved => "keep_observed",
            Decision::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "accept_proposed" => Some(Decision::AcceptProposed),
            "keep_observed" => Some(Decision::KeepObserved),
            "custom" => Some(Decision::Custom),
            _ => None,
        }
    }
}

/// One line of the session log. `custom_label` is 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub seq: u64,
    pub cell_id: String,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom_label: Option<usize>,
    pub timestamp: DateTime<Utc>,
}

/// Latest decision per cell: greatest timestamp, then greatest sequence number.
pub fn latest_per_cell<'a>(records: impl IntoIterator<Item = &'a DecisionRecord>) -> BTreeMap<String, DecisionRecord> {
    let mut out: BTreeMap<String, DecisionRecord> = BTreeMap::new();
    for r in records {
        let newer = out
            .get(&r.cell_id)
            .is_none_or(|cur| (r.timestamp, r.seq) > (cur.timestamp, cur.seq));
        if newer {
            out.insert(r.cell_id.clone(), r.clone());
        }
    }
    out
}

/// Read every complete record. A torn final line (crash mid-write) is skipped
/// with a warning; a malformed line elsewhere is an error.
pub fn read_log(path: &Path) -> Result<Vec<DecisionRecord>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e).with_context(|| format!("opening session log {}", path.display())),
    };
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .with_context(|| format!("reading session log {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<DecisionRecord>(line) {
            Ok(r) => out.push(r),
            Err(e) if i + 1 == lines.len() => {
                log::warn!("ignoring incomplete last line of {}: {e}", path.display());
            }
            Err(e) => {
                return Err(e).with_context(|| format!("{}:{}: malformed decision", path.display(), i + 1));
            }
        }
    }
    Ok(out)
}

/// Single writer over the log; every append is flushed and synced before it
/// returns.
#[derive(Debug)]
pub struct SessionLog {
    path: PathBuf,
    file: File,
    next_seq: u64,
    latest: BTreeMap<String, DecisionRecord>,
}

impl SessionLog {
    /// Open (creating if needed) and replay the log at `path`.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        // Only regular files hold a replayable history.
        let is_file = std::fs::metadata(&path).map(|m| m.is_file()).unwrap_or(true);
        let records = if is_file { read_log(&path)? } else { Vec::new() };
        let next_seq = records.iter().map(|r| r.seq + 1).max().unwrap_or(0);
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .with_context(|| format!("opening session log {}", path.display()))?;
        // Terminate a torn last line so the next record starts cleanly.
        let len = file.metadata()?.len();
        if is_file && len > 0 && !ends_with_newline(&path)? {
            file.write_all(b"\n")?;
            file.sync_data()?;
        }
        log::info!("session log {}: replayed {} decisions", path.display(), records.len());
        Ok(Self {
            latest: latest_per_cell(&records),
            path,
            file,
            next_seq,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn latest(&self) -> &BTreeMap<String, DecisionRecord> {
        &self.latest
    }

    /// Append a decision; it is durable once this returns `Ok`.
    pub fn append(&mut self, cell_id: &str, decision: Decision, custom_label: Option<usize>) -> Result<DecisionRecord> {
        let record = DecisionRecord {
            seq: self.next_seq,
            cell_id: cell_id.to_string(),
            decision,
            custom_label,
            timestamp: Utc::now(),
        };
        let mut line = serde_json::to_string(&record)?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .and_then(|_| self.file.sync_data())
            .with_context(|| format!("appending to {}", self.path.display()))?;
        self.next_seq += 1;
        let newer = self
            .latest
            .get(cell_id)
            .is_none_or(|cur| (record.timestamp, record.seq) > (cur.timestamp, cur.seq));
        if newer {
            self.latest.insert(cell_id.to_string(), record.clone());
        }
        Ok(record)
    }
}

fn ends_with_newline(path: &Path) -> Result<bool> {
    use std::io::{Read, Seek, SeekFrom};
    let mut f = File::open(path)?;
    f.seek(SeekFrom::End(-1))?;
    let mut b = [0u8; 1];
    f.read_exact(&mut b)?;
    Ok(b[0] == b'\n')
}
