//! Append-only JSON Lines log of query records.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use thoughtmem_core::{QueryRecord, ThoughtOutcome};

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("io failure on {path}: {source}")]
    IoFailure { path: String, source: io::Error },
    #[error("{path} line {line}: {reason}")]
    MalformedEntry { path: String, line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    /// ISO-8601 UTC.
    pub timestamp: String,
    #[serde(flatten)]
    pub record: QueryRecord,
}

/// Counts of thought outcomes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tallies {
    pub accepted: u64,
    pub rejected_redundant: u64,
    pub rejected_low_confidence: u64,
    pub no_thought: u64,
}

impl Tallies {
    pub fn count(&mut self, outcome: &ThoughtOutcome) {
        match outcome {
            ThoughtOutcome::Accepted { .. } => self.accepted += 1,
            ThoughtOutcome::RejectedRedundant { .. } => self.rejected_redundant += 1,
            ThoughtOutcome::RejectedLowConfidence => self.rejected_low_confidence += 1,
            ThoughtOutcome::NoThought => self.no_thought += 1,
        }
    }

    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a QueryRecord>) -> Self {
        let mut t = Self::default();
        for r in records {
            t.count(&r.thought_outcome);
        }
        t
    }
}

pub fn now_utc() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

#[derive(Debug, Clone)]
pub struct AuditLog {
    path: PathBuf,
}

impl AuditLog {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn io(&self) -> impl FnOnce(io::Error) -> AuditError + '_ {
        |source| AuditError::IoFailure {
            path: self.path.display().to_string(),
            source,
        }
    }

    pub fn append(&self, records: &[QueryRecord]) -> Result<(), AuditError> {
        if records.is_empty() {
            return Ok(());
        }
        let mut buf = String::new();
        for record in records {
            let entry = AuditEntry {
                timestamp: now_utc(),
                record: record.clone(),
            };
            buf.push_str(&serde_json::to_string(&entry).expect("audit entries always serialize"));
            buf.push('\n');
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(self.io())?;
        f.write_all(buf.as_bytes()).map_err(self.io())?;
        f.sync_data().map_err(self.io())
    }

    /// Every entry in order; a missing file is an empty log.
    pub fn entries(&self) -> Result<Vec<AuditEntry>, AuditError> {
        let text = match fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(self.io()(e)),
        };
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| {
                serde_json::from_str(l).map_err(|e| AuditError::MalformedEntry {
                    path: self.path.display().to_string(),
                    line: n + 1,
                    reason: e.to_string(),
                })
            })
            .collect()
    }

    pub fn tallies(&self) -> Result<Tallies, AuditError> {
        Ok(Tallies::from_records(self.entries()?.iter().map(|e| &e.record)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use thoughtmem_core::{Engine, HashedBowEmbedder, MemoryStore, PipelineConfig, ScriptedModel};

    #[test]
    fn entries_round_trip_and_tally() {
        let dir = tempfile::tempdir().unwrap();
        let log = AuditLog::new(dir.path().join("audit.jsonl"));
        assert_eq!(log.tallies().unwrap(), Tallies::default());

        let e = HashedBowEmbedder::default();
        let mut store = MemoryStore::new(256);
        thoughtmem_core::ingest_documents(
            &[thoughtmem_core::Document::new("d", "alpha beta")],
            500,
            &mut store,
            &e,
        )
        .unwrap();
        let lm = ScriptedModel::new()
            .thought("q1", 1, "gamma delta")
            .thought("q2", 0, "x");
        let out = Engine::new(&lm, &e, PipelineConfig::default())
            .run_session(&mut store, &["q1", "q2", "q1"])
            .unwrap();
        log.append(&out.records).unwrap();

        let entries = log.entries().unwrap();
        assert_eq!(entries.len(), 3);
        assert_eq!(entries[0].record, out.records[0]);
        assert!(entries[0].timestamp.ends_with('Z'));
        chrono::DateTime::parse_from_rfc3339(&entries[0].timestamp).unwrap();
        let t = log.tallies().unwrap();
        assert_eq!((t.accepted, t.rejected_low_confidence, t.rejected_redundant), (1, 1, 1));
    }
}
