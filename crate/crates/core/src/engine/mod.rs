//! The mediation engine: policy, trajectories, tickets and the ledger
//! behind one lock, with evidence written before any result is returned.

mod replay;
mod state;

use std::collections::BTreeSet;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::Instant;

use chrono::{DateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::escalation::{
    resolution_effect, ticket_id_for, EscalationError, EscalationTicket, TicketStatus, Verdict,
};
use crate::ledger::{
    tag_args, DecisionEvidence, EvidenceRecord, Ledger, LedgerError, OutcomeEvidence, PolicyLoaded,
    RecordBody, RequestSnapshot, ResolutionEvidence, ResolutionStatus, TicketRef, TriggeredTuple,
    VerificationReport,
};
use crate::mediator::{self, reason, Mediation, TupleVerdict};
use crate::policy::{
    ActionRequest, Attestation, DecisionKind, EvidenceField, OwnerRef, ValidatedPolicy,
};
use crate::trajectory::{StepOutcome, Trajectory, TrajectoryError};

pub use replay::{replay, replay_bytes, ReplayError, ReplayReport, ReplayRow};
pub use state::{OutcomeRefusal, RequestEntry, State};

/// What `decide` hands back to the caller.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediationResult {
    pub request_id: String,
    pub decision: DecisionKind,
    pub reason: String,
    pub deciding_tuple: Option<String>,
    pub ticket_id: Option<String>,
    /// Present when the decision is a rewrite: the request to execute instead.
    pub rewritten_request: Option<ActionRequest>,
    pub verdicts: Vec<TupleVerdict>,
    pub triggered: Vec<String>,
    pub context_incomplete: bool,
    /// Ledger position of the decision record. `None` only when the ledger
    /// could not be written, in which case the decision is a deny.
    pub evidence_seq: Option<u64>,
    pub elapsed_micros: u64,
}

impl MediationResult {
    pub fn ledger_unavailable(&self) -> bool {
        self.evidence_seq.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecideError {
    #[error("malformed request: {0}")]
    Malformed(String),
    #[error("request `{0}` was already decided")]
    Duplicate(String),
    #[error(transparent)]
    OutOfOrder(TrajectoryError),
}

#[derive(Debug, thiserror::Error)]
pub enum OutcomeError {
    #[error(transparent)]
    Refused(#[from] OutcomeRefusal),
    #[error("outcome must be executed or failed, not {0:?}")]
    InvalidOutcome(StepOutcome),
    #[error(transparent)]
    Ledger(LedgerError),
}

#[derive(Debug, thiserror::Error)]
pub enum ResolveError {
    #[error(transparent)]
    Escalation(#[from] EscalationError),
    #[error(transparent)]
    Ledger(LedgerError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeAck {
    pub request_id: String,
    pub outcome: StepOutcome,
    pub evidence_seq: u64,
}

struct Inner {
    ledger: Ledger,
    state: State,
}

pub struct Engine {
    policy: RwLock<Arc<ValidatedPolicy>>,
    inner: Mutex<Inner>,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("pack_hash", &self.policy().pack_hash())
            .finish_non_exhaustive()
    }
}

fn policy_loaded(policy: &ValidatedPolicy, source: &str) -> RecordBody {
    RecordBody::PolicyLoaded(PolicyLoaded {
        pack_hash: policy.pack_hash().to_string(),
        tuple_count: policy.set().tuples.len() as u64,
        source: source.to_string(),
    })
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("cannot rebuild state from ledger record {seq}: {message}")]
    Restore { seq: u64, message: String },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

impl Engine {
    /// Builds an engine over `ledger`, replaying any records already in it
    /// to rebuild trajectories and tickets, and records the active policy.
    pub fn new(
        policy: ValidatedPolicy,
        ledger: Ledger,
        clock: Arc<dyn Clock>,
        source: &str,
    ) -> Result<Self, EngineError> {
        let mut state = State::new(policy.set().accumulators.clone());
        let mut last_pack: Option<String> = None;
        for record in ledger.records() {
            state
                .apply(record)
                .map_err(|message| EngineError::Restore {
                    seq: record.seq,
                    message,
                })?;
            if let RecordBody::PolicyLoaded(p) = &record.body {
                last_pack = Some(p.pack_hash.clone());
            }
        }
        let mut inner = Inner { ledger, state };
        if last_pack.as_deref() != Some(policy.pack_hash()) {
            let now = clock.now();
            let record = inner
                .ledger
                .append(now, policy_loaded(&policy, source))?
                .clone();
            inner
                .state
                .apply(&record)
                .expect("policy records never fail");
        }
        Ok(Self {
            policy: RwLock::new(Arc::new(policy)),
            inner: Mutex::new(inner),
            clock,
        })
    }

    pub fn policy(&self) -> Arc<ValidatedPolicy> {
        self.policy.read().expect("policy lock poisoned").clone()
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().expect("engine lock poisoned")
    }

    /// Swaps in a new policy. In-flight decisions finish under the policy
    /// they started with.
    pub fn reload(&self, policy: ValidatedPolicy, source: &str) -> Result<u64, LedgerError> {
        let mut inner = self.lock();
        let now = self.clock.now();
        let seq = inner
            .ledger
            .append(now, policy_loaded(&policy, source))?
            .seq;
        inner
            .state
            .trajectories
            .set_decls(policy.set().accumulators.clone());
        *self.policy.write().expect("policy lock poisoned") = Arc::new(policy);
        Ok(seq)
    }

    pub fn decide(&self, req: &ActionRequest) -> Result<MediationResult, DecideError> {
        let started = Instant::now();
        req.check().map_err(DecideError::Malformed)?;
        let mut inner = self.lock();
        let policy = self.policy();
        let now = self.clock.now();
        expire_due(&mut inner, now);

        if inner.state.requests.contains_key(&req.request_id) {
            return Err(DecideError::Duplicate(req.request_id.clone()));
        }
        inner
            .state
            .trajectories
            .check_next(req)
            .map_err(DecideError::OutOfOrder)?;

        let mediation = match inner.state.trajectories.get(&req.trajectory_id) {
            Some(t) => mediator::evaluate(&policy, req, t, now.timestamp()),
            None => {
                let fresh = Trajectory::new(
                    req.trajectory_id.clone(),
                    req.principal.clone(),
                    &policy.set().accumulators,
                );
                mediator::evaluate(&policy, req, &fresh, now.timestamp())
            }
        };
        let evidence = decision_evidence(&policy, req, &mediation, now);
        let ticket_id = evidence.ticket.as_ref().map(|t| t.ticket_id.clone());
        let mut result = MediationResult {
            request_id: req.request_id.clone(),
            decision: mediation.decision.kind,
            reason: mediation.decision.reason.clone(),
            deciding_tuple: mediation.decision.tuple_id.clone(),
            ticket_id,
            rewritten_request: carries_rewrite(&mediation, req)
                .then(|| mediation.decision.effective_request.clone()),
            verdicts: mediation.verdicts().cloned().collect(),
            triggered: mediation.triggered_ids(),
            context_incomplete: mediation.context_incomplete(),
            evidence_seq: None,
            elapsed_micros: 0,
        };

        match inner
            .ledger
            .append(now, RecordBody::Decision(Box::new(evidence)))
        {
            Ok(record) => {
                let record = record.clone();
                result.evidence_seq = Some(record.seq);
                inner
                    .state
                    .apply(&record)
                    .expect("a freshly decided request applies cleanly");
            }
            Err(_) => {
                result.decision = DecisionKind::Deny;
                result.reason = reason::LEDGER_UNAVAILABLE.to_string();
                result.deciding_tuple = None;
                result.ticket_id = None;
                result.rewritten_request = None;
            }
        }
        result.elapsed_micros = u64::try_from(started.elapsed().as_micros()).unwrap_or(u64::MAX);
        Ok(result)
    }

    pub fn report_outcome(
        &self,
        request_id: &str,
        outcome: StepOutcome,
        detail: &str,
    ) -> Result<OutcomeAck, OutcomeError> {
        if !matches!(outcome, StepOutcome::Executed | StepOutcome::Failed) {
            return Err(OutcomeError::InvalidOutcome(outcome));
        }
        let mut inner = self.lock();
        let now = self.clock.now();
        expire_due(&mut inner, now);
        let trajectory_id = inner.state.check_outcome(request_id)?.trajectory_id.clone();
        let body = RecordBody::Outcome(OutcomeEvidence {
            request_id: request_id.to_string(),
            trajectory_id,
            outcome,
            detail: detail.to_string(),
        });
        let record = inner
            .ledger
            .append(now, body)
            .map_err(OutcomeError::Ledger)?
            .clone();
        inner
            .state
            .apply(&record)
            .expect("checked outcome applies cleanly");
        Ok(OutcomeAck {
            request_id: request_id.to_string(),
            outcome,
            evidence_seq: record.seq,
        })
    }

    pub fn resolve(
        &self,
        ticket_id: &str,
        approver: OwnerRef,
        verdict: Verdict,
        reason: &str,
    ) -> Result<EscalationTicket, ResolveError> {
        let mut inner = self.lock();
        let now = self.clock.now();
        expire_due(&mut inner, now);
        let ticket = inner.state.tickets.check_resolve(ticket_id, &approver)?;
        let status = verdict.status();
        let (effective, auto_allow) = resolution_effect(status, ticket.on_timeout);
        let body = RecordBody::EscalationResolution(ResolutionEvidence {
            ticket_id: ticket_id.to_string(),
            request_id: ticket.request.request_id.clone(),
            trajectory_id: ticket.request.trajectory_id.clone(),
            status,
            approver: Some(approver),
            reason: reason.to_string(),
            effective,
            auto_allow,
        });
        let record = inner
            .ledger
            .append(now, body)
            .map_err(ResolveError::Ledger)?
            .clone();
        inner
            .state
            .apply(&record)
            .expect("checked resolution applies cleanly");
        Ok(inner
            .state
            .tickets
            .get(ticket_id)
            .expect("resolved ticket exists")
            .clone())
    }

    /// Expires overdue tickets, recording each in the ledger.
    pub fn expire_tickets(&self) -> Vec<EscalationTicket> {
        let mut inner = self.lock();
        let now = self.clock.now();
        expire_due(&mut inner, now)
    }

    pub fn ticket(&self, ticket_id: &str) -> Option<EscalationTicket> {
        self.lock().state.tickets.get(ticket_id).cloned()
    }

    pub fn ticket_for_request(&self, request_id: &str) -> Option<EscalationTicket> {
        self.lock().state.tickets.for_request(request_id).cloned()
    }

    pub fn tickets(&self, status: Option<TicketStatus>) -> Vec<EscalationTicket> {
        let mut inner = self.lock();
        let now = self.clock.now();
        expire_due(&mut inner, now);
        inner
            .state
            .tickets
            .all()
            .filter(|t| status.is_none_or(|s| t.status == s))
            .cloned()
            .collect()
    }

    pub fn trajectory_snapshot(
        &self,
        id: &str,
    ) -> Option<std::collections::BTreeMap<String, crate::decimal::Decimal>> {
        self.lock()
            .state
            .trajectories
            .get(id)
            .map(Trajectory::snapshot)
    }

    /// Records with `seq >= from_seq`, optionally only those about one request.
    pub fn ledger_records(
        &self,
        from_seq: u64,
        request_id: Option<&str>,
        limit: usize,
    ) -> Vec<EvidenceRecord> {
        let inner = self.lock();
        inner
            .ledger
            .records()
            .iter()
            .filter(|r| r.seq >= from_seq)
            .filter(|r| request_id.is_none_or(|id| r.body.request_id() == Some(id)))
            .take(limit)
            .cloned()
            .collect()
    }

    pub fn ledger_jsonl(&self) -> String {
        self.lock().ledger.to_jsonl()
    }

    pub fn ledger_len(&self) -> usize {
        self.lock().ledger.len()
    }

    pub fn verify_ledger(&self) -> VerificationReport {
        self.lock().ledger.verify()
    }

    pub fn seal(&self) -> Result<(), LedgerError> {
        self.lock().ledger.seal()
    }
}

fn expire_due(inner: &mut Inner, now: DateTime<Utc>) -> Vec<EscalationTicket> {
    let mut expired = Vec::new();
    for ticket_id in inner.state.tickets.due(now) {
        let ticket = inner
            .state
            .tickets
            .get(&ticket_id)
            .expect("due ticket exists");
        let (effective, auto_allow) =
            resolution_effect(ResolutionStatus::Expired, ticket.on_timeout);
        let body = RecordBody::EscalationResolution(ResolutionEvidence {
            ticket_id: ticket_id.clone(),
            request_id: ticket.request.request_id.clone(),
            trajectory_id: ticket.request.trajectory_id.clone(),
            status: ResolutionStatus::Expired,
            approver: None,
            reason: if auto_allow {
                "AUTO_ALLOW".into()
            } else {
                "timeout".into()
            },
            effective,
            auto_allow,
        });
        // An unwritable ledger leaves the ticket pending; it expires on a
        // later attempt.
        let Ok(record) = inner.ledger.append(now, body) else {
            break;
        };
        let record = record.clone();
        inner
            .state
            .apply(&record)
            .expect("due ticket expires cleanly");
        expired.push(
            inner
                .state
                .tickets
                .get(&ticket_id)
                .expect("ticket exists")
                .clone(),
        );
    }
    expired
}

/// A rewritten request matters when it is what executes or what an
/// approver is asked about.
fn carries_rewrite(m: &Mediation, req: &ActionRequest) -> bool {
    matches!(
        m.decision.kind,
        DecisionKind::Rewrite | DecisionKind::Escalate
    ) && m.decision.is_rewritten(req)
}

fn decision_evidence(
    policy: &ValidatedPolicy,
    req: &ActionRequest,
    m: &Mediation,
    now: DateTime<Utc>,
) -> DecisionEvidence {
    let ps = policy.set();
    let triggered_ids = m.triggered_ids();
    let triggered: Vec<TriggeredTuple> = triggered_ids
        .iter()
        .filter_map(|id| ps.tuple(id))
        .map(|t| TriggeredTuple {
            tuple_id: t.id.clone(),
            decision: t.decision.kind(),
            owner: t.owner.clone(),
        })
        .collect();
    let mut fields: BTreeSet<EvidenceField> = BTreeSet::new();
    let mut attestation = Attestation::HashChainOnly;
    for t in triggered_ids.iter().filter_map(|id| ps.tuple(id)) {
        if let Some(spec) = &t.evidence {
            fields.extend(spec.required_fields().iter().copied());
            attestation = attestation.max(spec.attestation);
        }
    }
    let d = &m.decision;
    let ticket = match (&d.escalation, &d.tuple_id) {
        (Some(params), Some(tuple_id)) if d.kind == DecisionKind::Escalate => Some(TicketRef {
            ticket_id: ticket_id_for(&req.request_id),
            tuple_id: tuple_id.clone(),
            approver_role: params.approver_role.clone(),
            timeout_seconds: params.timeout_seconds,
            on_timeout: params.on_timeout,
            expires_at: now
                .checked_add_signed(TimeDelta::seconds(
                    i64::try_from(params.timeout_seconds).unwrap_or(i64::MAX / 1_000_000),
                ))
                .unwrap_or(DateTime::<Utc>::MAX_UTC),
        }),
        _ => None,
    };
    DecisionEvidence {
        request: RequestSnapshot::from(req),
        pack_hash: policy.pack_hash().to_string(),
        guard: m.passes[0].guard.clone(),
        verdicts: m.verdicts().cloned().collect(),
        triggered,
        context_incomplete: m.context_incomplete(),
        decision: d.kind,
        reason: d.reason.clone(),
        deciding_tuple: d.tuple_id.clone(),
        rewritten_args: carries_rewrite(m, req).then(|| tag_args(&d.effective_request.args)),
        ticket,
        evidence_fields: fields.into_iter().collect(),
        attestation,
    }
}
