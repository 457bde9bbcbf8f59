//! Re-deciding recorded requests under a policy pack.
//!
//! Each decision record is re-evaluated against the state rebuilt from the
//! records before it, with the recorded timestamp as the clock. State then
//! advances by the recorded history, not the replayed one, so one
//! disagreement does not cascade.

use serde::Serialize;

use super::state::State;
use crate::ledger::{verify_bytes, EvidenceRecord, RecordBody, VerificationReport};
use crate::mediator;
use crate::policy::{ActionRequest, DecisionKind, ValidatedPolicy};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReplayRow {
    pub seq: u64,
    pub request_id: String,
    pub recorded: DecisionKind,
    pub replayed: DecisionKind,
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReplayReport {
    pub pack_hash: String,
    pub recorded_pack_hashes: Vec<String>,
    /// False when replaying under a pack other than the one recorded.
    pub same_policy: bool,
    pub decisions: u64,
    pub matched: u64,
    pub rows: Vec<ReplayRow>,
}

impl ReplayReport {
    pub fn mismatches(&self) -> impl Iterator<Item = &ReplayRow> {
        self.rows.iter().filter(|r| !r.matched)
    }

    pub fn all_match(&self) -> bool {
        self.matched == self.decisions
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("ledger does not verify clean; first problem at seq {:?}", .0.first_broken)]
    Unverified(Box<VerificationReport>),
    #[error("record {seq} cannot be replayed: {message}")]
    Inconsistent { seq: u64, message: String },
}

/// Verifies then replays a ledger file's bytes.
pub fn replay_bytes(
    data: &[u8],
    key: Option<&[u8]>,
    policy: &ValidatedPolicy,
) -> Result<ReplayReport, ReplayError> {
    let (report, records) = verify_bytes(data, key);
    if !report.is_clean() {
        return Err(ReplayError::Unverified(Box::new(report)));
    }
    replay(&records, policy)
}

pub fn replay(
    records: &[EvidenceRecord],
    policy: &ValidatedPolicy,
) -> Result<ReplayReport, ReplayError> {
    let mut state = State::new(policy.set().accumulators.clone());
    let mut rows = Vec::new();
    let mut recorded_hashes: Vec<String> = Vec::new();
    let mut note_hash = |h: &str| {
        if !recorded_hashes.iter().any(|x| x == h) {
            recorded_hashes.push(h.to_string());
        }
    };
    for record in records {
        let inconsistent = |message: String| ReplayError::Inconsistent {
            seq: record.seq,
            message,
        };
        match &record.body {
            RecordBody::PolicyLoaded(p) => note_hash(&p.pack_hash),
            RecordBody::Decision(d) => {
                note_hash(&d.pack_hash);
                let req = ActionRequest::try_from(&d.request).map_err(inconsistent)?;
                let now = record.timestamp.timestamp();
                let m = match state.trajectories.get(&req.trajectory_id) {
                    Some(t) => mediator::evaluate(policy, &req, t, now),
                    None => {
                        let t = Trajectory::new(
                            req.trajectory_id.clone(),
                            req.principal.clone(),
                            &policy.set().accumulators,
                        );
                        mediator::evaluate(policy, &req, &t, now)
                    }
                };
                rows.push(ReplayRow {
                    seq: record.seq,
                    request_id: req.request_id.clone(),
                    recorded: d.decision,
                    replayed: m.decision.kind,
                    matched: d.decision == m.decision.kind,
                });
            }
            RecordBody::Outcome(_) | RecordBody::EscalationResolution(_) => {}
        }
        state.apply(record).map_err(inconsistent)?;
    }
    let matched = rows.iter().filter(|r| r.matched).count() as u64;
    Ok(ReplayReport {
        pack_hash: policy.pack_hash().to_string(),
        same_policy: recorded_hashes.iter().all(|h| h == policy.pack_hash()),
        recorded_pack_hashes: recorded_hashes,
        decisions: rows.len() as u64,
        matched,
        rows,
    })
}
