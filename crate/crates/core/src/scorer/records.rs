//! Line-delimited JSON score files, one record per (identity key, version).

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CohesionScore, MAX_MASKS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRecord {
    pub key: String,
    pub version: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub npc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub otc: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidences: Option<[f64; MAX_MASKS]>,
    pub backend: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ScoreRecord {
    pub fn success(key: &str, version: usize, score: &CohesionScore, backend: &str) -> Self {
        ScoreRecord {
            key: key.to_string(),
            version,
            npc: Some(score.npc),
            otc: Some(score.otc),
            confidences: Some(score.per_n_confidence),
            backend: backend.to_string(),
            error: None,
        }
    }

    pub fn failure(key: &str, version: usize, error: &str, backend: &str) -> Self {
        ScoreRecord {
            key: key.to_string(),
            version,
            npc: None,
            otc: None,
            confidences: None,
            backend: backend.to_string(),
            error: Some(error.to_string()),
        }
    }

    /// The score, when the record holds a consistent one.
    pub fn score(&self) -> Option<CohesionScore> {
        let s = CohesionScore::from_confidences(self.confidences?);
        (self.error.is_none() && Some(s.npc) == self.npc && Some(s.otc) == self.otc).then_some(s)
    }

    fn check(&self) -> Result<(), String> {
        match (&self.error, self.confidences) {
            (None, Some(_)) if self.score().is_none() => Err("npc/otc disagree with confidences".into()),
            (None, None) => Err("record has neither a score nor an error".into()),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// Scores keyed by identity key and version index; a later record for the
/// same version replaces an earlier one.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    entries: BTreeMap<(String, usize), ScoreRecord>,
}

/// What a lenient read recovered.
#[derive(Debug)]
pub struct PartialRead {
    pub table: ScoreTable,
    /// Bytes of the input made of complete, valid records.
    pub valid_bytes: u64,
    /// Whether a trailing partial or invalid line was dropped.
    pub dropped_tail: bool,
}

impl ScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, record: ScoreRecord) {
        self.entries.insert((record.key.clone(), record.version), record);
    }

    pub fn get(&self, key: &str, version: usize) -> Option<&ScoreRecord> {
        self.entries.get(&(key.to_string(), version))
    }

    pub fn score(&self, key: &str, version: usize) -> Option<CohesionScore> {
        self.get(key, version).and_then(ScoreRecord::score)
    }

    pub fn contains(&self, key: &str, version: usize) -> bool {
        self.entries.contains_key(&(key.to_string(), version))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &ScoreRecord> {
        self.entries.values()
    }

    /// Strict read: every non-empty line must be a valid record.
    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, RecordError> {
        let mut table = ScoreTable::new();
        for (i, line) in input.lines().enumerate() {
            let malformed = |reason: String| RecordError::Malformed { line: i + 1, reason };
            let line = line.map_err(|e| malformed(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ScoreRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
            rec.check().map_err(malformed)?;
            table.insert(rec);
        }
        Ok(table)
    }

    /// Resume read: stops at the first incomplete or invalid line, which is
    /// what an interrupted writer leaves behind.
    pub fn read_jsonl_lenient(bytes: &[u8]) -> PartialRead {
        let mut table = ScoreTable::new();
        let mut offset = 0usize;
        while offset < bytes.len() {
            let Some(nl) = bytes[offset..].iter().position(|&b| b == b'\n') else { break };
            let line = &bytes[offset..offset + nl];
            let parsed = std::str::from_utf8(line)
                .ok()
                .filter(|l| !l.trim().is_empty())
                .map(|l| serde_json::from_str::<ScoreRecord>(l).map_err(|e| e.to_string()).and_then(|r| r.check().map(|_| r)));
            match parsed {
                None if line.iter().all(u8::is_ascii_whitespace) => {}
                Some(Ok(rec)) => table.insert(rec),
                _ => break,
            }
            offset += nl + 1;
        }
        PartialRead { table, valid_bytes: offset as u64, dropped_tail: offset < bytes.len() }
    }

    pub fn load(path: &Path) -> Result<Self, RecordError> {
        let file = std::fs::File::open(path).map_err(|source| RecordError::Io { path: path.display().to_string(), source })?;
        Self::read_jsonl(std::io::BufReader::new(file))
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for rec in self.entries.values() {
            write_record(&mut out, rec)?;
        }
        out.flush()
    }
}

pub fn write_record<W: Write>(out: &mut W, rec: &ScoreRecord) -> std::io::Result<()> {
    let line = serde_json::to_string(rec).map_err(std::io::Error::other)?;
    out.write_all(line.as_bytes())?;
    out.write_all(b"\n")
}
