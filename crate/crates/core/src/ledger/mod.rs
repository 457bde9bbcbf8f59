//! Append-only, hash-chained evidence ledger.
//!
//! Each record is one line of canonical JSON. `hash` is the SHA-256 of the
//! record without its `hash` and `signature` keys; `signature`, when a key
//! is configured, is HMAC-SHA-256 over the hex hash.

mod canonical;
mod record;
mod sink;
mod verify;

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use hmac::{Hmac, KeyInit, Mac};
use sha2::{Digest, Sha256};

pub use canonical::to_canonical_string;
pub use record::*;
pub use sink::{FileSink, LedgerSink, MemorySink, SwitchableSink};
pub use verify::{
    verify_bytes, Problem, ProblemKind, SignatureFailure, SignatureProblem, VerificationReport,
};

pub const LEDGER_FILE_NAME: &str = ".guardrail-ledger.jsonl";
pub const SIGNING_KEY_ENV: &str = "GUARDRAIL_SIGNING_KEY";

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("ledger storage unavailable: {0}")]
    Unavailable(String),
    #[error("ledger chain is broken: {0}")]
    Broken(String),
    #[error("ledger is sealed")]
    Sealed,
    #[error("existing ledger failed verification (first problem at seq {:?})", .0.first_broken)]
    Corrupt(Box<VerificationReport>),
}

fn unhashed_value(record: &EvidenceRecord) -> serde_json::Value {
    let mut value = serde_json::to_value(record).expect("records serialize");
    if let Some(map) = value.as_object_mut() {
        map.remove("hash");
        map.remove("signature");
    }
    value
}

/// SHA-256 hex over the canonical form without `hash` and `signature`.
pub fn record_hash(record: &EvidenceRecord) -> String {
    let text = to_canonical_string(&unhashed_value(record));
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// The record's line in the ledger file, without the trailing newline.
pub fn record_line(record: &EvidenceRecord) -> String {
    to_canonical_string(&serde_json::to_value(record).expect("records serialize"))
}

pub fn sign_hash(key: &[u8], hash: &str) -> String {
    let mut mac =
        <Hmac<Sha256> as KeyInit>::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(hash.as_bytes());
    hex::encode(mac.finalize().into_bytes())
}

pub struct Ledger {
    sink: Box<dyn LedgerSink>,
    key: Option<Vec<u8>>,
    records: Vec<EvidenceRecord>,
    broken: Option<String>,
    sealed: bool,
    path: Option<PathBuf>,
}

impl std::fmt::Debug for Ledger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ledger")
            .field("records", &self.records.len())
            .field("signed", &self.key.is_some())
            .field("broken", &self.broken)
            .field("sealed", &self.sealed)
            .finish()
    }
}

impl Ledger {
    pub fn in_memory(key: Option<Vec<u8>>) -> Self {
        Self::with_sink(Box::new(MemorySink::new()), key)
    }

    /// A fresh, empty chain writing to `sink`.
    pub fn with_sink(sink: Box<dyn LedgerSink>, key: Option<Vec<u8>>) -> Self {
        Self {
            sink,
            key,
            records: Vec::new(),
            broken: None,
            sealed: false,
            path: None,
        }
    }

    /// Opens a ledger file, verifying any existing content first. A file
    /// that does not verify clean is refused.
    pub fn open_file(path: &Path, key: Option<Vec<u8>>) -> Result<Self, LedgerError> {
        let (sink, existing) =
            FileSink::open(path).map_err(|e| LedgerError::Unavailable(e.to_string()))?;
        let (report, records) = verify_bytes(&existing, key.as_deref());
        if !report.is_clean() {
            return Err(LedgerError::Corrupt(Box::new(report)));
        }
        Ok(Self {
            sink: Box::new(sink),
            key,
            records,
            broken: None,
            sealed: false,
            path: Some(path.to_path_buf()),
        })
    }

    /// Backing file, when file-based.
    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn records(&self) -> &[EvidenceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn is_signed(&self) -> bool {
        self.key.is_some()
    }

    pub fn is_broken(&self) -> bool {
        self.broken.is_some()
    }

    pub fn head_hash(&self) -> &str {
        self.records
            .last()
            .map_or(GENESIS_HASH, |r| r.hash.as_str())
    }

    pub fn next_seq(&self) -> u64 {
        self.records.last().map_or(0, |r| r.seq + 1)
    }

    /// Sequences, hashes, signs and durably writes a record.
    pub fn append(
        &mut self,
        timestamp: DateTime<Utc>,
        body: RecordBody,
    ) -> Result<&EvidenceRecord, LedgerError> {
        if self.sealed {
            return Err(LedgerError::Sealed);
        }
        if let Some(why) = &self.broken {
            return Err(LedgerError::Broken(why.clone()));
        }
        let mut record = EvidenceRecord {
            seq: self.next_seq(),
            timestamp,
            body,
            prev_hash: self.head_hash().to_string(),
            hash: String::new(),
            signature: None,
        };
        record.hash = record_hash(&record);
        record.signature = self.key.as_deref().map(|k| sign_hash(k, &record.hash));
        if let Err(e) = self.sink.append(&record_line(&record)) {
            if e.kind() == std::io::ErrorKind::InvalidData {
                self.broken = Some(e.to_string());
                return Err(LedgerError::Broken(e.to_string()));
            }
            return Err(LedgerError::Unavailable(e.to_string()));
        }
        self.records.push(record);
        Ok(self.records.last().expect("just pushed"))
    }

    /// Flushes and refuses further appends.
    pub fn seal(&mut self) -> Result<(), LedgerError> {
        self.sealed = true;
        self.sink
            .seal()
            .map_err(|e| LedgerError::Unavailable(e.to_string()))
    }

    pub fn to_jsonl(&self) -> String {
        self.records.iter().map(|r| record_line(r) + "\n").collect()
    }

    /// Verifies the chain: the file as it is on disk for file ledgers,
    /// otherwise the in-memory records re-encoded.
    pub fn verify(&self) -> VerificationReport {
        let bytes = match &self.path {
            Some(path) => match std::fs::read(path) {
                Ok(bytes) => bytes,
                Err(e) => {
                    let mut report = VerificationReport::default();
                    report.problems.push(Problem {
                        seq: 0,
                        line: 0,
                        kind: ProblemKind::Unparseable,
                        detail: format!("cannot read ledger file: {e}"),
                    });
                    report.first_broken = Some(0);
                    return report;
                }
            },
            None => self.to_jsonl().into_bytes(),
        };
        verify_bytes(&bytes, self.key.as_deref()).0
    }
}
