use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::clock::rfc3339;
use crate::condition::Expr;
use crate::rubric::RubricAnswers;
use crate::value::{Scalar, ScalarType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrincipalKind {
    Human,
    Agent,
    SubAgent,
    Service,
}

impl PrincipalKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PrincipalKind::Human => "human",
            PrincipalKind::Agent => "agent",
            PrincipalKind::SubAgent => "sub_agent",
            PrincipalKind::Service => "service",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Principal {
    pub id: String,
    pub kind: PrincipalKind,
    /// Delegating principals, root first.
    #[serde(default)]
    pub delegation_chain: Vec<String>,
}

impl Principal {
    pub fn new(id: impl Into<String>, kind: PrincipalKind) -> Self {
        Self {
            id: id.into(),
            kind,
            delegation_chain: Vec::new(),
        }
    }

    /// The string actor selectors are matched against: `kind:id`.
    pub fn selector_key(&self) -> String {
        format!("{}:{}", self.kind.as_str(), self.id)
    }

    pub fn check(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("principal id must not be empty".into());
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = self
            .delegation_chain
            .iter()
            .find(|id| !seen.insert(id.as_str()))
        {
            return Err(format!("delegation chain repeats `{dup}`"));
        }
        if self.kind == PrincipalKind::SubAgent && self.delegation_chain.is_empty() {
            return Err("a sub_agent principal needs a delegation chain".into());
        }
        Ok(())
    }
}

/// One proposed agent action at the tool-dispatch boundary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRequest {
    pub request_id: String,
    pub principal: Principal,
    pub action: String,
    pub resource: String,
    #[serde(default)]
    pub args: BTreeMap<String, Scalar>,
    pub trajectory_id: String,
    pub step_index: u64,
    #[serde(with = "rfc3339")]
    pub timestamp: DateTime<Utc>,
}

impl ActionRequest {
    pub fn check(&self) -> Result<(), String> {
        if self.request_id.is_empty() {
            return Err("request_id must not be empty".into());
        }
        if self.trajectory_id.is_empty() {
            return Err("trajectory_id must not be empty".into());
        }
        if self.action.is_empty() || self.resource.is_empty() {
            return Err("action and resource must not be empty".into());
        }
        self.principal.check()
    }
}

/// Request fields every precondition can read besides the arguments.
pub const BUILTIN_REQUEST_FIELDS: [&str; 4] =
    ["principal_id", "principal_kind", "action", "resource"];

/// Decision kinds in ascending severity; the derived order is the severity
/// order used when decisions are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    Allow,
    LogOnly,
    Rewrite,
    Escalate,
    Deny,
}

impl DecisionKind {
    pub const ALL: [DecisionKind; 5] = [
        DecisionKind::Allow,
        DecisionKind::LogOnly,
        DecisionKind::Rewrite,
        DecisionKind::Escalate,
        DecisionKind::Deny,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DecisionKind::Allow => "allow",
            DecisionKind::LogOnly => "log_only",
            DecisionKind::Rewrite => "rewrite",
            DecisionKind::Escalate => "escalate",
            DecisionKind::Deny => "deny",
        }
    }

    pub fn permits_execution(self) -> bool {
        matches!(
            self,
            DecisionKind::Allow | DecisionKind::LogOnly | DecisionKind::Rewrite
        )
    }
}

impl fmt::Display for DecisionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeoutAction {
    #[default]
    Deny,
    Allow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscalateParams {
    pub approver_role: String,
    pub timeout_seconds: u64,
    pub on_timeout: TimeoutAction,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RewriteOp {
    Set {
        field: String,
        value: Scalar,
    },
    Clamp {
        field: String,
        min: Scalar,
        max: Scalar,
    },
    Redact {
        field: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecisionAction {
    Allow,
    Deny,
    LogOnly,
    Escalate(EscalateParams),
    Rewrite(Vec<RewriteOp>),
}

impl DecisionAction {
    pub fn kind(&self) -> DecisionKind {
        match self {
            DecisionAction::Allow => DecisionKind::Allow,
            DecisionAction::Deny => DecisionKind::Deny,
            DecisionAction::LogOnly => DecisionKind::LogOnly,
            DecisionAction::Escalate(_) => DecisionKind::Escalate,
            DecisionAction::Rewrite(_) => DecisionKind::Rewrite,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionSpec {
    pub action: DecisionAction,
    pub reason: String,
}

impl DecisionSpec {
    pub fn new(action: DecisionAction) -> Self {
        Self {
            action,
            reason: String::new(),
        }
    }

    pub fn kind(&self) -> DecisionKind {
        self.action.kind()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceField {
    Args,
    MatchedTuples,
    ApproverIdentity,
    Outcome,
}

impl EvidenceField {
    pub const ALL: [EvidenceField; 4] = [
        EvidenceField::Args,
        EvidenceField::MatchedTuples,
        EvidenceField::ApproverIdentity,
        EvidenceField::Outcome,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EvidenceField::Args => "args",
            EvidenceField::MatchedTuples => "matched_tuples",
            EvidenceField::ApproverIdentity => "approver_identity",
            EvidenceField::Outcome => "outcome",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.as_str() == word)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attestation {
    #[default]
    HashChainOnly,
    KeyedSignature,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvidenceSpec {
    required_fields: BTreeSet<EvidenceField>,
    pub attestation: Attestation,
}

impl EvidenceSpec {
    /// `matched_tuples` is always part of the required set.
    pub fn new(fields: impl IntoIterator<Item = EvidenceField>, attestation: Attestation) -> Self {
        let mut required_fields: BTreeSet<_> = fields.into_iter().collect();
        required_fields.insert(EvidenceField::MatchedTuples);
        Self {
            required_fields,
            attestation,
        }
    }

    pub fn required_fields(&self) -> &BTreeSet<EvidenceField> {
        &self.required_fields
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OwnerRef {
    pub identity: String,
    pub role: String,
}

impl OwnerRef {
    pub fn new(identity: impl Into<String>, role: impl Into<String>) -> Self {
        Self {
            identity: identity.into(),
            role: role.into(),
        }
    }

    pub fn is_complete(&self) -> bool {
        !self.identity.is_empty() && !self.role.is_empty()
    }
}

/// A normalized control: who may do what to which resource under which
/// precondition, with what decision, evidence and accountable owner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlTuple {
    pub id: String,
    pub actor_selector: String,
    pub action_selector: String,
    pub resource_selector: String,
    pub precondition: Expr,
    pub decision: DecisionSpec,
    pub evidence: Option<EvidenceSpec>,
    pub owner: OwnerRef,
    pub review_note: String,
    pub rubric_answers: Option<RubricAnswers>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardDefault {
    Allow,
    Deny,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Guard {
    pub pattern: String,
    pub default: GuardDefault,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccumulatorKind {
    Sum,
    Count,
    DistinctCount,
}

impl AccumulatorKind {
    pub fn keyword(self) -> &'static str {
        match self {
            AccumulatorKind::Sum => "sum",
            AccumulatorKind::Count => "count",
            AccumulatorKind::DistinctCount => "distinct_count",
        }
    }
}

/// `track name = kind(action_glob[.field])`. Sums need a numeric field;
/// `distinct_count` without a field counts distinct resources.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccumulatorDecl {
    pub name: String,
    pub kind: AccumulatorKind,
    pub action_pattern: String,
    pub field: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PolicySet {
    pub tuples: Vec<ControlTuple>,
    pub sets: BTreeMap<String, Vec<Scalar>>,
    /// Declared argument fields and their types.
    pub fields: BTreeMap<String, ScalarType>,
    /// First match wins.
    pub guards: Vec<Guard>,
    pub accumulators: Vec<AccumulatorDecl>,
}

impl PolicySet {
    pub fn tuple(&self, id: &str) -> Option<&ControlTuple> {
        self.tuples.iter().find(|t| t.id == id)
    }

    pub fn guard_for(&self, action: &str) -> Option<&Guard> {
        self.guards
            .iter()
            .find(|g| super::glob_match(&g.pattern, action))
    }

    pub fn set_element_type(&self, name: &str) -> Option<Option<ScalarType>> {
        self.sets
            .get(name)
            .map(|members| members.first().map(Scalar::scalar_type))
    }
}
