//! Runtime state derived from ledger records. Live operation, restart and
//! replay all go through [`State::apply`], so state is always a function
//! of the ledger prefix.

use std::collections::HashMap;

use crate::escalation::{EscalationTicket, TicketStatus, TicketStore};
use crate::ledger::{EvidenceRecord, RecordBody};
use crate::policy::{AccumulatorDecl, ActionRequest, DecisionKind, EscalateParams};
use crate::trajectory::{StepOutcome, TrajectoryStore};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestEntry {
    pub trajectory_id: String,
    pub decision: DecisionKind,
    pub ticket_id: Option<String>,
    /// Outcome reported by the caller (executed or failed).
    pub reported: Option<StepOutcome>,
    pub decision_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OutcomeRefusal {
    #[error("unknown request `{0}`")]
    UnknownRequest(String),
    #[error("outcome for `{0}` was already reported")]
    AlreadyReported(String),
    #[error("request `{0}` was denied and may not execute")]
    Denied(String),
    #[error("request `{0}` is awaiting approval")]
    AwaitingApproval(String),
    #[error("escalation for `{0}` ended in {1:?}")]
    EscalationRefused(String, TicketStatus),
}

impl OutcomeRefusal {
    pub fn code(&self) -> &'static str {
        match self {
            OutcomeRefusal::UnknownRequest(_) => "UNKNOWN_REQUEST",
            OutcomeRefusal::AlreadyReported(_) => "ALREADY_REPORTED",
            OutcomeRefusal::Denied(_) => "REQUEST_DENIED",
            OutcomeRefusal::AwaitingApproval(_) => "AWAITING_APPROVAL",
            OutcomeRefusal::EscalationRefused(..) => "ESCALATION_REFUSED",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct State {
    pub trajectories: TrajectoryStore,
    pub tickets: TicketStore,
    pub requests: HashMap<String, RequestEntry>,
}

impl State {
    pub fn new(decls: Vec<AccumulatorDecl>) -> Self {
        Self {
            trajectories: TrajectoryStore::new(decls),
            ..Self::default()
        }
    }

    /// May the caller report `executed` for this request?
    pub fn check_outcome(&self, request_id: &str) -> Result<&RequestEntry, OutcomeRefusal> {
        let entry = self
            .requests
            .get(request_id)
            .ok_or_else(|| OutcomeRefusal::UnknownRequest(request_id.into()))?;
        if entry.reported.is_some() {
            return Err(OutcomeRefusal::AlreadyReported(request_id.into()));
        }
        match entry.decision {
            DecisionKind::Deny => Err(OutcomeRefusal::Denied(request_id.into())),
            DecisionKind::Escalate => {
                let ticket = entry
                    .ticket_id
                    .as_deref()
                    .and_then(|id| self.tickets.get(id));
                match ticket {
                    Some(t) if t.status == TicketStatus::Pending => {
                        Err(OutcomeRefusal::AwaitingApproval(request_id.into()))
                    }
                    Some(t) if t.effective == Some(DecisionKind::Allow) => Ok(entry),
                    Some(t) => Err(OutcomeRefusal::EscalationRefused(
                        request_id.into(),
                        t.status,
                    )),
                    None => Err(OutcomeRefusal::AwaitingApproval(request_id.into())),
                }
            }
            _ => Ok(entry),
        }
    }

    pub fn apply(&mut self, record: &EvidenceRecord) -> Result<(), String> {
        match &record.body {
            RecordBody::PolicyLoaded(_) => Ok(()),
            RecordBody::Decision(d) => {
                let submitted = ActionRequest::try_from(&d.request)?;
                let mut effective = submitted.clone();
                if let Some(args) = &d.rewritten_args {
                    effective.args = crate::ledger::untag_args(args)?;
                }
                if self.requests.contains_key(&submitted.request_id) {
                    return Err(format!("request `{}` decided twice", submitted.request_id));
                }
                if self.trajectories.get(&submitted.trajectory_id).is_none() {
                    self.trajectories
                        .begin_trajectory(&submitted.trajectory_id, submitted.principal.clone())
                        .map_err(|e| e.to_string())?;
                }
                let outcome = if d.decision == DecisionKind::Deny {
                    StepOutcome::Blocked
                } else {
                    StepOutcome::Pending
                };
                self.trajectories
                    .record_step(
                        &submitted.trajectory_id,
                        effective.clone(),
                        d.decision,
                        outcome,
                    )
                    .map_err(|e| e.to_string())?;
                let ticket_id = match &d.ticket {
                    Some(t) => {
                        let params = EscalateParams {
                            approver_role: t.approver_role.clone(),
                            timeout_seconds: t.timeout_seconds,
                            on_timeout: t.on_timeout,
                        };
                        let opened = self
                            .tickets
                            .open(&effective, &t.tuple_id, &params, record.timestamp)
                            .map_err(|e| e.to_string())?;
                        if opened.ticket_id != t.ticket_id || opened.expires_at != t.expires_at {
                            return Err(format!(
                                "ticket `{}` does not match its decision record",
                                t.ticket_id
                            ));
                        }
                        Some(t.ticket_id.clone())
                    }
                    None => None,
                };
                self.requests.insert(
                    submitted.request_id.clone(),
                    RequestEntry {
                        trajectory_id: submitted.trajectory_id,
                        decision: d.decision,
                        ticket_id,
                        reported: None,
                        decision_seq: record.seq,
                    },
                );
                Ok(())
            }
            RecordBody::Outcome(o) => {
                let entry = self
                    .requests
                    .get_mut(&o.request_id)
                    .ok_or_else(|| format!("outcome for unknown request `{}`", o.request_id))?;
                entry.reported = Some(o.outcome);
                self.trajectories
                    .set_outcome(&o.trajectory_id, &o.request_id, o.outcome)
                    .map_err(|e| e.to_string())?;
                Ok(())
            }
            RecordBody::EscalationResolution(r) => {
                let ticket = self
                    .tickets
                    .apply(
                        &r.ticket_id,
                        r.status,
                        r.approver.clone(),
                        &r.reason,
                        record.timestamp,
                    )
                    .map_err(|e| e.to_string())?;
                if ticket.effective != Some(r.effective) || ticket.auto_allow != r.auto_allow {
                    return Err(format!(
                        "resolution of `{}` disagrees with its ticket",
                        r.ticket_id
                    ));
                }
                if r.effective == DecisionKind::Deny {
                    self.trajectories
                        .set_outcome(&r.trajectory_id, &r.request_id, StepOutcome::Blocked)
                        .map_err(|e| e.to_string())?;
                }
                Ok(())
            }
        }
    }

    pub fn ticket(&self, id: &str) -> Option<&EscalationTicket> {
        self.tickets.get(id)
    }
}
