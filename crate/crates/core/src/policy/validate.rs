use serde::Serialize;
use sha2::{Digest, Sha256};

use super::model::*;
use super::parse::PolicyError;
use super::print::print_policy;
use crate::condition::{typecheck, Namespace, Schema, TypeErrorCode, TypedExpr};
use crate::value::ScalarType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    MissingOwner,
    MissingEvidence,
    DanglingSet,
    TypeErrorInPrecondition,
    MalformedDecision,
    DuplicateTupleId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub tuple_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ValidationReport {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub parse_errors: Vec<PolicyError>,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.parse_errors.is_empty() && self.violations.is_empty()
    }

    pub fn codes(&self) -> Vec<ViolationCode> {
        self.violations.iter().map(|v| v.code).collect()
    }
}

/// Everything a precondition in `ps` can reference, with types.
pub fn schema_for(ps: &PolicySet) -> Schema {
    let mut schema = Schema::default();
    for name in BUILTIN_REQUEST_FIELDS {
        schema = schema.with_attr(Namespace::Request, name, ScalarType::String);
    }
    for (name, ty) in &ps.fields {
        schema = schema.with_attr(Namespace::Request, name, *ty);
    }
    for acc in &ps.accumulators {
        schema = schema.with_attr(Namespace::Trajectory, &acc.name, ScalarType::Decimal);
    }
    schema = schema.with_attr(Namespace::Env, "now", ScalarType::Integer);
    for name in ps.sets.keys() {
        schema = schema.with_set(name, ps.set_element_type(name).flatten());
    }
    schema
}

/// Checks one tuple against the policy it lives in. Violations are data.
pub fn validate_tuple(t: &ControlTuple, ctx: &PolicySet) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut push = |code, message: String| {
        report.violations.push(Violation {
            code,
            tuple_id: t.id.clone(),
            message,
        });
    };
    if !t.owner.is_complete() {
        push(
            ViolationCode::MissingOwner,
            "control names no accountable owner identity and role".into(),
        );
    }
    if t.evidence.is_none() {
        push(
            ViolationCode::MissingEvidence,
            "control names no evidence artifact".into(),
        );
    }
    match &t.decision.action {
        DecisionAction::Rewrite(ops) if ops.is_empty() => push(
            ViolationCode::MalformedDecision,
            "rewrite needs at least one operation".into(),
        ),
        DecisionAction::Escalate(p) if p.approver_role.is_empty() || p.timeout_seconds == 0 => {
            push(
                ViolationCode::MalformedDecision,
                "escalate needs an approver role and a positive timeout".into(),
            )
        }
        _ => {}
    }
    if let Err(errors) = typecheck(&t.precondition, &schema_for(ctx)) {
        for e in errors {
            let code = if e.code == TypeErrorCode::UnknownSet {
                ViolationCode::DanglingSet
            } else {
                ViolationCode::TypeErrorInPrecondition
            };
            push(code, e.message);
        }
    }
    report
}

pub fn validate_policy(ps: &PolicySet) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen = std::collections::BTreeSet::new();
    for t in &ps.tuples {
        if !seen.insert(t.id.as_str()) {
            report.violations.push(Violation {
                code: ViolationCode::DuplicateTupleId,
                tuple_id: t.id.clone(),
                message: "tuple id is not unique".into(),
            });
        }
        report.violations.extend(validate_tuple(t, ps).violations);
    }
    report
}

/// A policy set that passed validation, with typechecked preconditions.
/// Immutable; share it behind an `Arc` and swap whole on reload.
#[derive(Debug, Clone)]
pub struct ValidatedPolicy {
    set: PolicySet,
    preconditions: Vec<TypedExpr>,
    pack_hash: String,
}

impl ValidatedPolicy {
    pub fn new(set: PolicySet) -> Result<Self, ValidationReport> {
        let report = validate_policy(&set);
        if !report.is_clean() {
            return Err(report);
        }
        let schema = schema_for(&set);
        let preconditions = set
            .tuples
            .iter()
            .map(|t| {
                typecheck(&t.precondition, &schema).expect("validated precondition typechecks")
            })
            .collect();
        let pack_hash = policy_pack_hash(&set);
        Ok(Self {
            set,
            preconditions,
            pack_hash,
        })
    }

    pub fn set(&self) -> &PolicySet {
        &self.set
    }

    /// Typed precondition for the tuple at `index` in document order.
    pub fn precondition(&self, index: usize) -> &TypedExpr {
        &self.preconditions[index]
    }

    pub fn pack_hash(&self) -> &str {
        &self.pack_hash
    }
}

/// SHA-256 over the canonical printed form, so formatting and comments do
/// not change the hash.
pub fn policy_pack_hash(ps: &PolicySet) -> String {
    hex::encode(Sha256::digest(print_policy(ps).as_bytes()))
}
