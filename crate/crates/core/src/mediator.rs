//! Decision evaluation at the tool-dispatch boundary.
//!
//! Everything here is pure: the same policy, request, trajectory state and
//! clock reading always produce the same [`Mediation`]. Evidence and ticket
//! handling live in the engine.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::condition::{evaluate as eval_expr, EvalContext};
use crate::decimal::Decimal;
use crate::policy::{
    tuple_matches, ActionRequest, DecisionAction, DecisionKind, EscalateParams, GuardDefault,
    RewriteOp, ValidatedPolicy,
};
use crate::trajectory::Trajectory;
use crate::value::Scalar;

/// Maximum number of rewrite applications before mediation gives up.
pub const MAX_REWRITE_PASSES: u32 = 3;

pub mod reason {
    pub const CONTEXT_INCOMPLETE: &str = "CONTEXT_INCOMPLETE";
    pub const NO_ALLOWING_TUPLE: &str = "NO_ALLOWING_TUPLE";
    pub const GUARD_DEFAULT_ALLOW: &str = "GUARD_DEFAULT_ALLOW";
    pub const UNGUARDED: &str = "UNGUARDED";
    pub const REWRITE_DIVERGED: &str = "REWRITE_DIVERGED";
    pub const REWRITE_TYPE_ERROR: &str = "REWRITE_TYPE_ERROR";
    pub const LEDGER_UNAVAILABLE: &str = "LEDGER_UNAVAILABLE";
}

/// Join on the severity order. `None` for an empty input.
pub fn combine<I: IntoIterator<Item = DecisionKind>>(kinds: I) -> Option<DecisionKind> {
    kinds.into_iter().max()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TupleVerdict {
    pub tuple_id: String,
    pub pass: u32,
    /// Precondition value; the tuple triggered iff this is true.
    pub triggered: bool,
    pub context_incomplete: bool,
    pub decision: DecisionKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GuardState {
    Unguarded,
    Guarded {
        pattern: String,
        default: GuardDefault,
    },
}

impl GuardState {
    pub fn is_guarded(&self) -> bool {
        matches!(self, GuardState::Guarded { .. })
    }
}

/// One evaluation of the policy against one version of the request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PassTrace {
    pub pass: u32,
    pub request: ActionRequest,
    pub verdicts: Vec<TupleVerdict>,
    pub guard: GuardState,
    pub context_incomplete: bool,
    pub kind: DecisionKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub kind: DecisionKind,
    pub reason: String,
    /// Tuple that determined the outcome, if any.
    pub tuple_id: Option<String>,
    pub escalation: Option<EscalateParams>,
    /// The request that would execute: the input unless rewritten.
    pub effective_request: ActionRequest,
}

impl Decision {
    pub fn is_rewritten(&self, original: &ActionRequest) -> bool {
        self.effective_request != *original
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mediation {
    pub decision: Decision,
    pub passes: Vec<PassTrace>,
}

impl Mediation {
    pub fn context_incomplete(&self) -> bool {
        self.passes.iter().any(|p| p.context_incomplete)
    }

    pub fn verdicts(&self) -> impl Iterator<Item = &TupleVerdict> {
        self.passes.iter().flat_map(|p| p.verdicts.iter())
    }

    /// Ids of tuples that triggered in any pass, first occurrence order.
    pub fn triggered_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = Vec::new();
        for v in self.verdicts().filter(|v| v.triggered) {
            if !ids.contains(&v.tuple_id) {
                ids.push(v.tuple_id.clone());
            }
        }
        ids
    }

    pub fn guarded(&self) -> bool {
        self.passes.first().is_some_and(|p| p.guard.is_guarded())
    }
}

/// Request attributes visible to preconditions: arguments plus the four
/// built-in string fields, which shadow arguments of the same name.
pub fn request_attributes(req: &ActionRequest) -> BTreeMap<String, Scalar> {
    let mut attrs = req.args.clone();
    attrs.insert("principal_id".into(), Scalar::Str(req.principal.id.clone()));
    attrs.insert(
        "principal_kind".into(),
        Scalar::Str(req.principal.kind.as_str().into()),
    );
    attrs.insert("action".into(), Scalar::Str(req.action.clone()));
    attrs.insert("resource".into(), Scalar::Str(req.resource.clone()));
    attrs
}

/// Runs one pass and returns the trace plus the decision it implies
/// (before any rewrite is applied).
fn single_pass(
    policy: &ValidatedPolicy,
    req: &ActionRequest,
    trajectory: &Trajectory,
    now: i64,
    pass: u32,
) -> (PassTrace, Decision) {
    let ps = policy.set();
    let attrs = request_attributes(req);
    let projected: BTreeMap<String, Option<Decimal>> = trajectory.projected(&ps.accumulators, req);
    let ctx = EvalContext {
        request: &attrs,
        trajectory: &projected,
        sets: &ps.sets,
        now,
    };

    let mut verdicts = Vec::new();
    let mut triggered = Vec::new();
    let mut incomplete = false;
    for (index, t) in ps.tuples.iter().enumerate() {
        if !tuple_matches(t, req) {
            continue;
        }
        let ev = eval_expr(policy.precondition(index), &ctx);
        incomplete |= ev.context_incomplete;
        verdicts.push(TupleVerdict {
            tuple_id: t.id.clone(),
            pass,
            triggered: ev.value,
            context_incomplete: ev.context_incomplete,
            decision: t.decision.kind(),
        });
        if ev.value {
            triggered.push(t);
        }
    }

    let guard = match ps.guard_for(&req.action) {
        Some(g) => GuardState::Guarded {
            pattern: g.pattern.clone(),
            default: g.default,
        },
        None => GuardState::Unguarded,
    };

    let base = |kind: DecisionKind, reason: &str, tuple_id: Option<String>| Decision {
        kind,
        reason: reason.to_string(),
        tuple_id,
        escalation: None,
        effective_request: req.clone(),
    };

    let decision = if incomplete && guard.is_guarded() {
        base(DecisionKind::Deny, reason::CONTEXT_INCOMPLETE, None)
    } else {
        let default = match &guard {
            GuardState::Guarded {
                default: GuardDefault::Deny,
                ..
            } => {
                let allowed = triggered
                    .iter()
                    .any(|t| t.decision.kind() == DecisionKind::Allow);
                (!allowed).then_some((DecisionKind::Deny, reason::NO_ALLOWING_TUPLE))
            }
            GuardState::Guarded {
                default: GuardDefault::Allow,
                ..
            } => Some((DecisionKind::Allow, reason::GUARD_DEFAULT_ALLOW)),
            GuardState::Unguarded => triggered
                .is_empty()
                .then_some((DecisionKind::LogOnly, reason::UNGUARDED)),
        };
        let kind = combine(
            triggered
                .iter()
                .map(|t| t.decision.kind())
                .chain(default.map(|d| d.0)),
        )
        .expect("either a tuple triggered or a default applies");
        match triggered.iter().find(|t| t.decision.kind() == kind) {
            Some(t) => {
                let reason = if t.decision.reason.is_empty() {
                    t.id.as_str()
                } else {
                    t.decision.reason.as_str()
                };
                let mut d = base(kind, reason, Some(t.id.clone()));
                if let DecisionAction::Escalate(params) = &t.decision.action {
                    d.escalation = Some(params.clone());
                }
                d
            }
            None => base(kind, default.expect("default supplies the maximum").1, None),
        }
    };

    let trace = PassTrace {
        pass,
        request: req.clone(),
        verdicts,
        guard,
        context_incomplete: incomplete,
        kind: decision.kind,
    };
    (trace, decision)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RewriteError {
    #[error("clamp on non-numeric field `{0}`")]
    NonNumeric(String),
}

/// Applies rewrite operations in order. Clamping a missing field is a no-op.
pub fn apply_ops<'a, I>(req: &ActionRequest, ops: I) -> Result<ActionRequest, RewriteError>
where
    I: IntoIterator<Item = &'a RewriteOp>,
{
    let mut out = req.clone();
    for op in ops {
        match op {
            RewriteOp::Set { field, value } => {
                out.args.insert(field.clone(), value.clone());
            }
            RewriteOp::Redact { field } => {
                out.args.remove(field);
            }
            RewriteOp::Clamp { field, min, max } => {
                let Some(current) = out.args.get(field) else {
                    continue;
                };
                if !current.scalar_type().is_numeric() {
                    return Err(RewriteError::NonNumeric(field.clone()));
                }
                let clamped = if current.compare(min) == Some(std::cmp::Ordering::Less) {
                    min.clone()
                } else if current.compare(max) == Some(std::cmp::Ordering::Greater) {
                    max.clone()
                } else {
                    current.clone()
                };
                out.args.insert(field.clone(), clamped);
            }
        }
    }
    Ok(out)
}

/// Applies the operations of every triggered rewrite tuple, in policy file order.
pub fn apply_rewrites(
    policy: &ValidatedPolicy,
    req: &ActionRequest,
    trace: &PassTrace,
) -> Result<ActionRequest, RewriteError> {
    let ops = policy
        .set()
        .tuples
        .iter()
        .filter(|t| {
            trace
                .verdicts
                .iter()
                .any(|v| v.triggered && v.tuple_id == t.id)
        })
        .filter_map(|t| match &t.decision.action {
            DecisionAction::Rewrite(ops) => Some(ops.iter()),
            _ => None,
        })
        .flatten();
    apply_ops(req, ops)
}

/// Decides `req` against `policy`. `trajectory` is the state of the
/// request's trajectory before this step; `now` is unix seconds.
pub fn evaluate(
    policy: &ValidatedPolicy,
    req: &ActionRequest,
    trajectory: &Trajectory,
    now: i64,
) -> Mediation {
    let mut passes = Vec::new();
    let mut current = req.clone();
    for pass in 1..=MAX_REWRITE_PASSES {
        let (trace, mut decision) = single_pass(policy, &current, trajectory, now, pass);
        if decision.kind != DecisionKind::Rewrite {
            if current != *req
                && matches!(decision.kind, DecisionKind::Allow | DecisionKind::LogOnly)
            {
                decision.kind = DecisionKind::Rewrite;
            }
            passes.push(trace);
            return Mediation { decision, passes };
        }
        let next = match apply_rewrites(policy, &current, &trace) {
            Ok(next) => next,
            Err(_) => {
                passes.push(trace);
                return Mediation {
                    decision: fixed(DecisionKind::Deny, reason::REWRITE_TYPE_ERROR, &current),
                    passes,
                };
            }
        };
        passes.push(trace);
        if next == current {
            return Mediation { decision, passes };
        }
        current = next;
    }
    Mediation {
        decision: fixed(DecisionKind::Deny, reason::REWRITE_DIVERGED, &current),
        passes,
    }
}

fn fixed(kind: DecisionKind, why: &str, req: &ActionRequest) -> Decision {
    Decision {
        kind,
        reason: why.to_string(),
        tuple_id: None,
        escalation: None,
        effective_request: req.clone(),
    }
}

/// Convenience for callers without trajectory history.
pub fn evaluate_fresh(policy: &ValidatedPolicy, req: &ActionRequest, now: i64) -> Mediation {
    let t = Trajectory::new(
        req.trajectory_id.clone(),
        req.principal.clone(),
        &policy.set().accumulators,
    );
    evaluate(policy, req, &t, now)
}
