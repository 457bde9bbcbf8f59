use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::mediator::{GuardState, TupleVerdict};
use crate::policy::{
    ActionRequest, Attestation, DecisionKind, EvidenceField, OwnerRef, Principal, TimeoutAction,
};
use crate::trajectory::StepOutcome;
use crate::value::{Scalar, TaggedScalar};

pub const GENESIS_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    pub seq: u64,
    #[serde(with = "crate::clock::rfc3339")]
    pub timestamp: DateTime<Utc>,
    #[serde(flatten)]
    pub body: RecordBody,
    pub prev_hash: String,
    pub hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    PolicyLoaded,
    Decision,
    Outcome,
    EscalationResolution,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecordBody {
    PolicyLoaded(PolicyLoaded),
    Decision(Box<DecisionEvidence>),
    Outcome(OutcomeEvidence),
    EscalationResolution(ResolutionEvidence),
}

impl RecordBody {
    pub fn kind(&self) -> RecordKind {
        match self {
            RecordBody::PolicyLoaded(_) => RecordKind::PolicyLoaded,
            RecordBody::Decision(_) => RecordKind::Decision,
            RecordBody::Outcome(_) => RecordKind::Outcome,
            RecordBody::EscalationResolution(_) => RecordKind::EscalationResolution,
        }
    }

    pub fn request_id(&self) -> Option<&str> {
        match self {
            RecordBody::PolicyLoaded(_) => None,
            RecordBody::Decision(d) => Some(&d.request.request_id),
            RecordBody::Outcome(o) => Some(&o.request_id),
            RecordBody::EscalationResolution(r) => Some(&r.request_id),
        }
    }

    /// Whether any control behind this record asked for a keyed signature.
    pub fn requires_signature(&self) -> bool {
        match self {
            RecordBody::Decision(d) => d.attestation == Attestation::KeyedSignature,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyLoaded {
    pub pack_hash: String,
    pub tuple_count: u64,
    pub source: String,
}

/// The request as submitted, with arguments in tagged fixed-point form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestSnapshot {
    pub request_id: String,
    pub principal: Principal,
    pub action: String,
    pub resource: String,
    pub args: BTreeMap<String, TaggedScalar>,
    pub trajectory_id: String,
    pub step_index: u64,
    #[serde(with = "crate::clock::rfc3339")]
    pub submitted_at: DateTime<Utc>,
}

pub fn tag_args(args: &BTreeMap<String, Scalar>) -> BTreeMap<String, TaggedScalar> {
    args.iter()
        .map(|(k, v)| (k.clone(), TaggedScalar::from(v)))
        .collect()
}

pub fn untag_args(
    args: &BTreeMap<String, TaggedScalar>,
) -> Result<BTreeMap<String, Scalar>, String> {
    args.iter()
        .map(|(k, v)| Ok((k.clone(), Scalar::try_from(v)?)))
        .collect()
}

impl From<&ActionRequest> for RequestSnapshot {
    fn from(req: &ActionRequest) -> Self {
        Self {
            request_id: req.request_id.clone(),
            principal: req.principal.clone(),
            action: req.action.clone(),
            resource: req.resource.clone(),
            args: tag_args(&req.args),
            trajectory_id: req.trajectory_id.clone(),
            step_index: req.step_index,
            submitted_at: req.timestamp,
        }
    }
}

impl TryFrom<&RequestSnapshot> for ActionRequest {
    type Error = String;

    fn try_from(s: &RequestSnapshot) -> Result<Self, String> {
        Ok(ActionRequest {
            request_id: s.request_id.clone(),
            principal: s.principal.clone(),
            action: s.action.clone(),
            resource: s.resource.clone(),
            args: untag_args(&s.args)?,
            trajectory_id: s.trajectory_id.clone(),
            step_index: s.step_index,
            timestamp: s.submitted_at,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggeredTuple {
    pub tuple_id: String,
    pub decision: DecisionKind,
    pub owner: OwnerRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TicketRef {
    pub ticket_id: String,
    pub tuple_id: String,
    pub approver_role: String,
    pub timeout_seconds: u64,
    pub on_timeout: TimeoutAction,
    #[serde(with = "crate::clock::rfc3339")]
    pub expires_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionEvidence {
    pub request: RequestSnapshot,
    pub pack_hash: String,
    pub guard: GuardState,
    pub verdicts: Vec<TupleVerdict>,
    pub triggered: Vec<TriggeredTuple>,
    pub context_incomplete: bool,
    pub decision: DecisionKind,
    pub reason: String,
    pub deciding_tuple: Option<String>,
    /// Arguments after rewriting, when the decision is a rewrite.
    pub rewritten_args: Option<BTreeMap<String, TaggedScalar>>,
    pub ticket: Option<TicketRef>,
    /// Union of evidence fields named by the triggered controls.
    pub evidence_fields: Vec<EvidenceField>,
    pub attestation: Attestation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeEvidence {
    pub request_id: String,
    pub trajectory_id: String,
    pub outcome: StepOutcome,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionStatus {
    Approved,
    Denied,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionEvidence {
    pub ticket_id: String,
    pub request_id: String,
    pub trajectory_id: String,
    pub status: ResolutionStatus,
    pub approver: Option<OwnerRef>,
    pub reason: String,
    /// What the held action became: allow or deny.
    pub effective: DecisionKind,
    /// An expiry that let the action through.
    pub auto_allow: bool,
}
