//! Brute-force reference evaluator. Written against the documented
//! semantics only; it shares no evaluation code with the engine.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use guardrail_core::condition::{CmpOp, Expr, Namespace};
use guardrail_core::policy::{
    AccumulatorKind, ActionRequest, DecisionAction, DecisionKind, GuardDefault, PolicySet,
    RewriteOp,
};
use guardrail_core::value::{Scalar, ScalarType};
use regex::Regex;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefDecision {
    pub kind: DecisionKind,
    pub reason: String,
    pub tuple_id: Option<String>,
    pub args: BTreeMap<String, Scalar>,
    pub context_incomplete: bool,
}

pub fn glob(pattern: &str, text: &str) -> bool {
    thread_local! {
        static CACHE: std::cell::RefCell<BTreeMap<String, Regex>> = Default::default();
    }
    CACHE.with(|c| {
        c.borrow_mut()
            .entry(pattern.to_string())
            .or_insert_with(|| {
                let parts: Vec<String> = pattern.split('*').map(regex::escape).collect();
                Regex::new(&format!("^{}$", parts.join(".*"))).unwrap()
            })
            .is_match(text)
    })
}

/// Fixed-point value scaled by 10^4, as an exact integer.
fn scaled(v: &Scalar) -> Option<i128> {
    match v {
        Scalar::Int(i) => Some(*i as i128 * 10_000),
        Scalar::Dec(d) => Some(d.scaled() as i128),
        _ => None,
    }
}

fn order(a: &Scalar, b: &Scalar) -> Option<Ordering> {
    match (a, b) {
        (Scalar::Str(x), Scalar::Str(y)) => Some(x.cmp(y)),
        (Scalar::Bool(x), Scalar::Bool(y)) => Some(x.cmp(y)),
        _ => Some(scaled(a)?.cmp(&scaled(b)?)),
    }
}

fn holds(op: CmpOp, o: Ordering) -> bool {
    match op {
        CmpOp::Eq => o == Ordering::Equal,
        CmpOp::Ne => o != Ordering::Equal,
        CmpOp::Lt => o == Ordering::Less,
        CmpOp::Le => o != Ordering::Greater,
        CmpOp::Gt => o == Ordering::Greater,
        CmpOp::Ge => o != Ordering::Less,
    }
}

fn type_ok(v: &Scalar, declared: ScalarType) -> bool {
    matches!(
        (v, declared),
        (Scalar::Str(_), ScalarType::String)
            | (Scalar::Bool(_), ScalarType::Boolean)
            | (Scalar::Int(_), ScalarType::Integer)
            | (Scalar::Int(_), ScalarType::Decimal)
            | (Scalar::Dec(_), ScalarType::Decimal)
    )
}

/// Accumulator values after `history` (all executed) plus `req`, or `None`
/// where `req` lacks the field the accumulator needs.
pub fn project(
    ps: &PolicySet,
    history: &[ActionRequest],
    req: &ActionRequest,
) -> BTreeMap<String, Option<i128>> {
    let mut out = BTreeMap::new();
    for acc in &ps.accumulators {
        let relevant = |r: &ActionRequest| glob(&acc.action_pattern, &r.action);
        let field_of = |r: &ActionRequest| acc.field.as_ref().and_then(|f| r.args.get(f)).cloned();
        let value = match acc.kind {
            AccumulatorKind::Count => Some(
                10_000
                    * (history.iter().filter(|r| relevant(r)).count() + usize::from(relevant(req)))
                        as i128,
            ),
            AccumulatorKind::Sum => {
                let past: i128 = history
                    .iter()
                    .filter(|r| relevant(r))
                    .filter_map(|r| field_of(r).and_then(|v| scaled(&v)))
                    .sum();
                if relevant(req) {
                    field_of(req).and_then(|v| scaled(&v)).map(|v| past + v)
                } else {
                    Some(past)
                }
            }
            AccumulatorKind::DistinctCount => {
                let key = |r: &ActionRequest| -> Option<String> {
                    match &acc.field {
                        None => Some(format!("resource {}", r.resource)),
                        Some(_) => field_of(r).map(|v| format!("{:?}", v)),
                    }
                };
                let mut seen: BTreeSet<String> = history
                    .iter()
                    .filter(|r| relevant(r))
                    .filter_map(key)
                    .collect();
                if relevant(req) {
                    key(req).map(|k| {
                        seen.insert(k);
                        10_000 * seen.len() as i128
                    })
                } else {
                    Some(10_000 * seen.len() as i128)
                }
            }
        };
        out.insert(acc.name.clone(), value);
    }
    out
}

struct Env<'a> {
    ps: &'a PolicySet,
    req: &'a ActionRequest,
    traj: BTreeMap<String, Option<i128>>,
    now: i64,
}

impl Env<'_> {
    fn lookup(&self, ns: Namespace, name: &str) -> Option<Scalar> {
        match ns {
            Namespace::Env => (name == "now").then_some(Scalar::Int(self.now)),
            Namespace::Trajectory => self
                .traj
                .get(name)
                .copied()
                .flatten()
                .map(|v| Scalar::Dec(guardrail_core::decimal::Decimal::from_scaled(v as i64))),
            Namespace::Request => {
                let builtin = match name {
                    "principal_id" => Some(self.req.principal.id.clone()),
                    "principal_kind" => Some(self.req.principal.kind.as_str().to_string()),
                    "action" => Some(self.req.action.clone()),
                    "resource" => Some(self.req.resource.clone()),
                    _ => None,
                };
                if let Some(b) = builtin {
                    return Some(Scalar::Str(b));
                }
                let declared = *self.ps.fields.get(name)?;
                self.req
                    .args
                    .get(name)
                    .filter(|v| type_ok(v, declared))
                    .cloned()
            }
        }
    }

    fn value(&self, e: &Expr, flag: &mut bool) -> Option<Scalar> {
        match e {
            Expr::Lit(v) => Some(v.clone()),
            Expr::Path(p) => {
                let v = self.lookup(p.namespace, &p.name);
                if v.is_none() {
                    *flag = true;
                }
                v
            }
            other => Some(Scalar::Bool(self.truth(other, flag))),
        }
    }

    fn truth(&self, e: &Expr, flag: &mut bool) -> bool {
        match e {
            Expr::Lit(_) | Expr::Path(_) => self.value(e, flag) == Some(Scalar::Bool(true)),
            Expr::Not(x) => !self.truth(x, flag),
            Expr::And(a, b) => {
                if self.truth(a, flag) {
                    self.truth(b, flag)
                } else {
                    false
                }
            }
            Expr::Or(a, b) => {
                if self.truth(a, flag) {
                    true
                } else {
                    self.truth(b, flag)
                }
            }
            Expr::Cmp(op, a, b) => {
                let l = self.value(a, flag);
                let r = self.value(b, flag);
                match (l, r) {
                    (Some(l), Some(r)) => order(&l, &r).is_some_and(|o| holds(*op, o)),
                    _ => false,
                }
            }
            Expr::InSet(x, set) => match self.value(x, flag) {
                None => false,
                Some(v) => self.ps.sets[set]
                    .iter()
                    .any(|m| order(&v, m) == Some(Ordering::Equal)),
            },
        }
    }
}

struct Pass {
    kind: DecisionKind,
    reason: String,
    tuple_id: Option<String>,
    triggered: Vec<usize>,
    incomplete: bool,
}

fn one_pass(ps: &PolicySet, req: &ActionRequest, history: &[ActionRequest], now: i64) -> Pass {
    let env = Env {
        ps,
        req,
        traj: project(ps, history, req),
        now,
    };
    let mut incomplete = false;
    let mut triggered = Vec::new();
    for (i, t) in ps.tuples.iter().enumerate() {
        let actor = format!("{}:{}", req.principal.kind.as_str(), req.principal.id);
        if !(glob(&t.actor_selector, &actor)
            && glob(&t.action_selector, &req.action)
            && glob(&t.resource_selector, &req.resource))
        {
            continue;
        }
        let mut flag = false;
        if env.truth(&t.precondition, &mut flag) {
            triggered.push(i);
        }
        incomplete |= flag;
    }
    let guard = ps.guards.iter().find(|g| glob(&g.pattern, &req.action));
    if guard.is_some() && incomplete {
        return Pass {
            kind: DecisionKind::Deny,
            reason: "CONTEXT_INCOMPLETE".into(),
            tuple_id: None,
            triggered,
            incomplete,
        };
    }
    let default: Option<(DecisionKind, &str)> = match guard.map(|g| g.default) {
        Some(GuardDefault::Deny) => {
            if triggered
                .iter()
                .any(|&i| ps.tuples[i].decision.kind() == DecisionKind::Allow)
            {
                None
            } else {
                Some((DecisionKind::Deny, "NO_ALLOWING_TUPLE"))
            }
        }
        Some(GuardDefault::Allow) => Some((DecisionKind::Allow, "GUARD_DEFAULT_ALLOW")),
        None if triggered.is_empty() => Some((DecisionKind::LogOnly, "UNGUARDED")),
        None => None,
    };
    let mut kind = default.map(|d| d.0).unwrap_or(DecisionKind::Allow);
    for &i in &triggered {
        kind = kind.max(ps.tuples[i].decision.kind());
    }
    match triggered
        .iter()
        .find(|&&i| ps.tuples[i].decision.kind() == kind)
    {
        Some(&i) => {
            let t = &ps.tuples[i];
            let reason = if t.decision.reason.is_empty() {
                t.id.clone()
            } else {
                t.decision.reason.clone()
            };
            Pass {
                kind,
                reason,
                tuple_id: Some(t.id.clone()),
                triggered,
                incomplete,
            }
        }
        None => Pass {
            kind,
            reason: default.unwrap().1.into(),
            tuple_id: None,
            triggered,
            incomplete,
        },
    }
}

fn rewrite(ps: &PolicySet, req: &ActionRequest, triggered: &[usize]) -> Result<ActionRequest, ()> {
    let mut out = req.clone();
    for &i in triggered {
        let DecisionAction::Rewrite(ops) = &ps.tuples[i].decision.action else {
            continue;
        };
        for op in ops {
            match op {
                RewriteOp::Set { field, value } => {
                    out.args.insert(field.clone(), value.clone());
                }
                RewriteOp::Redact { field } => {
                    out.args.remove(field);
                }
                RewriteOp::Clamp { field, min, max } => {
                    if let Some(v) = out.args.get(field).cloned() {
                        let x = scaled(&v).ok_or(())?;
                        let new = if x < scaled(min).unwrap() {
                            min.clone()
                        } else if x > scaled(max).unwrap() {
                            max.clone()
                        } else {
                            v
                        };
                        out.args.insert(field.clone(), new);
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn decide(
    ps: &PolicySet,
    req: &ActionRequest,
    history: &[ActionRequest],
    now: i64,
) -> RefDecision {
    let mut current = req.clone();
    let mut any_incomplete = false;
    for _ in 0..3 {
        let p = one_pass(ps, &current, history, now);
        any_incomplete |= p.incomplete;
        let finish = |kind, reason: String, tuple_id, args| RefDecision {
            kind,
            reason,
            tuple_id,
            args,
            context_incomplete: any_incomplete,
        };
        if p.kind != DecisionKind::Rewrite {
            let rewritten = current.args != req.args;
            let kind = if rewritten
                && (p.kind == DecisionKind::Allow || p.kind == DecisionKind::LogOnly)
            {
                DecisionKind::Rewrite
            } else {
                p.kind
            };
            return finish(kind, p.reason, p.tuple_id, current.args);
        }
        match rewrite(ps, &current, &p.triggered) {
            Err(()) => {
                return finish(
                    DecisionKind::Deny,
                    "REWRITE_TYPE_ERROR".into(),
                    None,
                    current.args,
                )
            }
            Ok(next) if next == current => {
                return finish(p.kind, p.reason, p.tuple_id, current.args)
            }
            Ok(next) => current = next,
        }
    }
    RefDecision {
        kind: DecisionKind::Deny,
        reason: "REWRITE_DIVERGED".into(),
        tuple_id: None,
        args: current.args,
        context_incomplete: any_incomplete,
    }
}
