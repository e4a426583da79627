//! Append-only audit trail, one JSON object per line.
//!
//! Sequence numbers start at 1 and strictly increase; the loader rejects
//! anything else. A crash mid-write can leave a partial last line: the loader
//! ignores it and [`AuditWriter::open`] truncates it before appending, so the
//! file never holds a half record followed by a whole one.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::model::{AuditRecord, FinalDecision, PathwayDecision};

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("writing audit record {sequence_number}: {source}")]
    Io { sequence_number: u64, source: io::Error },
    #[error("reading audit log: {0}")]
    Read(#[source] io::Error),
    #[error("audit log line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("audit log line {line}: sequence number {found} does not follow {previous}")]
    NonMonotonic { line: usize, previous: u64, found: u64 },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditLog {
    records: Vec<AuditRecord>,
}

impl AuditLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: Vec<AuditRecord>) -> Result<Self, AuditError> {
        check_monotone(&records)?;
        Ok(AuditLog { records })
    }

    fn next_sequence(&self) -> u64 {
        self.records.last().map_or(1, |r| r.sequence_number + 1)
    }

    /// Appends a record with the next sequence number and returns it.
    pub fn append(&mut self, pathway: PathwayDecision, final_decision: FinalDecision) -> &AuditRecord {
        let seq = self.next_sequence();
        self.records.push(AuditRecord {
            sequence_number: seq,
            pathway_decision: pathway,
            final_decision,
            timestamp: seq,
        });
        self.records.last().expect("just pushed")
    }

    pub fn records(&self) -> &[AuditRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Concatenates shard logs in the given order, renumbering from 1.
    pub fn merge(logs: impl IntoIterator<Item = AuditLog>) -> AuditLog {
        let mut out = AuditLog::new();
        for log in logs {
            for r in log.records {
                out.append(r.pathway_decision, r.final_decision);
            }
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("audit records serialize"));
            s.push('\n');
        }
        s
    }

    /// Parses a JSON Lines log. An unterminated, unparseable last line is a
    /// torn write and is dropped.
    pub fn from_jsonl(text: &str) -> Result<Self, AuditError> {
        let complete = text.ends_with('\n') || text.is_empty();
        let lines: Vec<&str> = text.lines().collect();
        let mut records = Vec::with_capacity(lines.len());
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<AuditRecord>(line) {
                Ok(r) => records.push(r),
                Err(_) if !complete && i + 1 == lines.len() => break,
                Err(e) => return Err(AuditError::Malformed { line: i + 1, message: e.to_string() }),
            }
        }
        Self::from_records(records)
    }
}

fn check_monotone(records: &[AuditRecord]) -> Result<(), AuditError> {
    let mut previous = 0;
    for (i, r) in records.iter().enumerate() {
        if r.sequence_number <= previous {
            return Err(AuditError::NonMonotonic { line: i + 1, previous, found: r.sequence_number });
        }
        previous = r.sequence_number;
    }
    Ok(())
}

pub fn load_audit_log(path: &Path) -> Result<AuditLog, AuditError> {
    let text = std::fs::read_to_string(path).map_err(AuditError::Read)?;
    AuditLog::from_jsonl(&text)
}

/// Streaming writer. Each record is written and flushed as one line.
pub struct AuditWriter<W: Write> {
    out: W,
    next: u64,
}

impl<W: Write> AuditWriter<W> {
    pub fn new(out: W, next_sequence: u64) -> Self {
        AuditWriter { out, next: next_sequence.max(1) }
    }

    pub fn append(&mut self, pathway: PathwayDecision, final_decision: FinalDecision) -> Result<AuditRecord, AuditError> {
        let seq = self.next;
        let record = AuditRecord { sequence_number: seq, pathway_decision: pathway, final_decision, timestamp: seq };
        let mut line = serde_json::to_vec(&record).expect("audit records serialize");
        line.push(b'\n');
        self.out
            .write_all(&line)
            .and_then(|_| self.out.flush())
            .map_err(|source| AuditError::Io { sequence_number: seq, source })?;
        self.next += 1;
        Ok(record)
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl AuditWriter<BufWriter<File>> {
    /// Opens `path` for appending, creating it if needed. A torn last line
    /// is cut off first and numbering continues after the last whole record.
    pub fn open(path: &Path) -> Result<Self, AuditError> {
        let existing = match std::fs::read(path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(AuditError::Read(e)),
        };
        let keep = existing.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        let text = String::from_utf8_lossy(&existing[..keep]);
        let log = AuditLog::from_jsonl(&text)?;
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(AuditError::Read)?;
        if keep < existing.len() {
            file.set_len(keep as u64).map_err(AuditError::Read)?;
        }
        Ok(AuditWriter::new(BufWriter::new(file), log.next_sequence()))
    }
}
