//! Offline chain verification over raw ledger bytes.

use serde::Serialize;

use super::record::{EvidenceRecord, GENESIS_HASH};
use super::{record_hash, record_line, sign_hash};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProblemKind {
    Unparseable,
    NonCanonical,
    HashMismatch,
    BrokenLink,
    SeqRegression,
    TruncatedTail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Problem {
    /// Sequence number the record has, or should have had.
    pub seq: u64,
    /// 1-based line in the ledger file.
    pub line: usize,
    pub kind: ProblemKind,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SignatureProblem {
    Missing,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SignatureFailure {
    pub seq: u64,
    pub problem: SignatureProblem,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    pub records: u64,
    pub first_broken: Option<u64>,
    pub problems: Vec<Problem>,
    /// Missing sequence numbers.
    pub gaps: Vec<u64>,
    pub signature_failures: Vec<SignatureFailure>,
    pub signatures_verified: u64,
    /// Records that required a signature while no key was available to check.
    pub signatures_unchecked: u64,
}

impl VerificationReport {
    pub fn is_clean(&self) -> bool {
        self.problems.is_empty() && self.gaps.is_empty() && self.signature_failures.is_empty()
    }

    fn problem(&mut self, seq: u64, line: usize, kind: ProblemKind, detail: impl Into<String>) {
        if self.first_broken.is_none() {
            self.first_broken = Some(seq);
        }
        self.problems.push(Problem {
            seq,
            line,
            kind,
            detail: detail.into(),
        });
    }
}

/// Verifies a ledger file's bytes and returns the records that parsed.
/// With a key, every present signature is checked and records from
/// signed controls must carry one.
pub fn verify_bytes(data: &[u8], key: Option<&[u8]>) -> (VerificationReport, Vec<EvidenceRecord>) {
    let mut report = VerificationReport::default();
    let mut records = Vec::new();
    if data.is_empty() {
        return (report, records);
    }
    let (body, truncated) = match data.strip_suffix(b"\n") {
        Some(body) => (body, false),
        None => (data, true),
    };
    let lines: Vec<&[u8]> = body.split(|b| *b == b'\n').collect();
    let last_index = lines.len() - 1;

    // Hash of the previous record, or None when it could not be read.
    let mut prev_hash: Option<String> = Some(GENESIS_HASH.to_string());
    let mut expected_seq: u64 = 0;

    for (index, raw) in lines.into_iter().enumerate() {
        let line_no = index + 1;
        report.records += 1;
        let parsed = std::str::from_utf8(raw)
            .map_err(|e| e.to_string())
            .and_then(|text| {
                serde_json::from_str::<EvidenceRecord>(text).map_err(|e| e.to_string())
            });
        let record = match parsed {
            Ok(r) => r,
            Err(e) => {
                report.problem(expected_seq, line_no, ProblemKind::Unparseable, e);
                prev_hash = None;
                expected_seq += 1;
                continue;
            }
        };
        let seq = record.seq;

        let mut gap = false;
        if seq > expected_seq {
            report.gaps.extend(expected_seq..seq);
            gap = true;
        } else if seq < expected_seq {
            report.problem(
                seq,
                line_no,
                ProblemKind::SeqRegression,
                format!("expected seq {expected_seq}, found {seq}"),
            );
        }

        if record_line(&record).as_bytes() != raw {
            report.problem(
                seq,
                line_no,
                ProblemKind::NonCanonical,
                "record is not in canonical form",
            );
        }
        if record_hash(&record) != record.hash {
            report.problem(
                seq,
                line_no,
                ProblemKind::HashMismatch,
                "stored hash does not match contents",
            );
        }
        if let Some(prev) = &prev_hash {
            if !gap && *prev != record.prev_hash {
                report.problem(
                    seq,
                    line_no,
                    ProblemKind::BrokenLink,
                    "prev_hash does not match the previous record",
                );
            }
        }
        if truncated && index == last_index {
            report.problem(
                seq,
                line_no,
                ProblemKind::TruncatedTail,
                "last record is not newline-terminated",
            );
        }

        match (key, &record.signature) {
            (Some(k), Some(sig)) => {
                if sign_hash(k, &record.hash) == *sig {
                    report.signatures_verified += 1;
                } else {
                    report.signature_failures.push(SignatureFailure {
                        seq,
                        problem: SignatureProblem::Invalid,
                    });
                }
            }
            (Some(_), None) if record.body.requires_signature() => {
                report.signature_failures.push(SignatureFailure {
                    seq,
                    problem: SignatureProblem::Missing,
                });
            }
            (None, _) if record.body.requires_signature() => report.signatures_unchecked += 1,
            _ => {}
        }

        prev_hash = Some(record.hash.clone());
        expected_seq = seq.max(expected_seq) + 1;
        records.push(record);
    }
    (report, records)
}
