//! Line-delimited JSON persistence for [`FunctionHistoryStore`].
//!
//! One version per line: `{"key", "commit", "time", "body", "lines", "tokens"}`,
//! grouped by key in key order, versions in history order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use super::{FunctionHistory, FunctionHistoryStore, FunctionIdentity, FunctionVersion};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreRecord {
    pub key: String,
    pub commit: String,
    pub time: String,
    pub body: String,
    pub lines: usize,
    pub tokens: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

impl From<&FunctionVersion> for StoreRecord {
    fn from(v: &FunctionVersion) -> Self {
        StoreRecord {
            key: v.identity.key(),
            commit: v.commit_id.clone(),
            time: v.commit_time.to_rfc3339_opts(SecondsFormat::Secs, true),
            body: v.body_text.clone(),
            lines: v.body_line_count,
            tokens: v.token_estimate,
        }
    }
}

impl FunctionHistoryStore {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (_, v) in self.versions() {
            let line = serde_json::to_string(&StoreRecord::from(v)).map_err(std::io::Error::other)?;
            out.write_all(line.as_bytes())?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let io = |source| StoreError::Io { path: path.display().to_string(), source };
        let file = File::create(path).map_err(io)?;
        self.write_jsonl(BufWriter::new(file)).map_err(io)
    }

    /// Reads records back; histories must appear contiguously and in order.
    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, StoreError> {
        let mut histories: Vec<FunctionHistory> = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line_no = i + 1;
            let malformed = |reason: String| StoreError::Malformed { line: line_no, reason };
            let line = line.map_err(|e| malformed(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: StoreRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
            let identity = FunctionIdentity::parse_key(&rec.key).map_err(|e| malformed(e.to_string()))?;
            let commit_time = DateTime::parse_from_rfc3339(&rec.time)
                .map_err(|e| malformed(format!("bad time `{}`: {e}", rec.time)))?
                .with_timezone(&Utc);
            let version = FunctionVersion {
                identity,
                commit_id: rec.commit,
                commit_time,
                body_text: rec.body,
                body_line_count: rec.lines,
                token_estimate: rec.tokens,
            };
            match histories.last_mut() {
                Some(h) if h.identity == version.identity => {
                    let prev = h.versions.last().expect("histories are never empty");
                    if prev.order_key() >= version.order_key() {
                        return Err(malformed("versions out of order".into()));
                    }
                    if prev.body_text == version.body_text {
                        return Err(malformed("consecutive duplicate version".into()));
                    }
                    h.versions.push(version);
                }
                last => {
                    if let Some(h) = last {
                        if h.identity.key() >= version.identity.key() {
                            return Err(malformed(format!("key `{}` out of order", rec.key)));
                        }
                    }
                    histories.push(FunctionHistory { identity: version.identity.clone(), versions: vec![version] });
                }
            }
        }
        Ok(FunctionHistoryStore { histories })
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let file = File::open(path).map_err(|source| StoreError::Io { path: path.display().to_string(), source })?;
        Self::read_jsonl(BufReader::new(file))
    }
}
