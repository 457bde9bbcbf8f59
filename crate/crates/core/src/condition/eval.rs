use std::collections::BTreeMap;

use super::ast::{AttrPath, Namespace};
use super::typecheck::{TypedExpr, TypedNode};
use crate::decimal::Decimal;
use crate::value::Scalar;

/// Read-only view of everything a precondition may observe.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    /// Flattened request fields: arguments plus `principal_id`,
    /// `principal_kind`, `action`, `resource`.
    pub request: &'a BTreeMap<String, Scalar>,
    /// Accumulator values; `None` when the value cannot be determined.
    pub trajectory: &'a BTreeMap<String, Option<Decimal>>,
    pub sets: &'a BTreeMap<String, Vec<Scalar>>,
    /// Decision time, unix seconds.
    pub now: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Evaluation {
    pub value: bool,
    /// Some attribute read during evaluation was absent or ill-typed.
    pub context_incomplete: bool,
}

/// Total evaluation of a typechecked expression. Missing attributes make the
/// enclosing comparison or membership false and raise `context_incomplete`.
/// `&&` and `||` short-circuit left to right.
pub fn evaluate(expr: &TypedExpr, ctx: &EvalContext<'_>) -> Evaluation {
    let mut incomplete = false;
    let value = eval_bool(expr, ctx, &mut incomplete);
    Evaluation {
        value,
        context_incomplete: incomplete,
    }
}

fn lookup(
    path: &AttrPath,
    expected: crate::value::ScalarType,
    ctx: &EvalContext<'_>,
) -> Option<Scalar> {
    let value = match path.namespace {
        Namespace::Request => ctx.request.get(&path.name).cloned(),
        Namespace::Trajectory => ctx
            .trajectory
            .get(&path.name)
            .copied()
            .flatten()
            .map(Scalar::Dec),
        Namespace::Env if path.name == "now" => Some(Scalar::Int(ctx.now)),
        Namespace::Env => None,
    }?;
    value.conforms_to(expected).then_some(value)
}

fn eval_scalar(expr: &TypedExpr, ctx: &EvalContext<'_>, incomplete: &mut bool) -> Option<Scalar> {
    match &expr.node {
        TypedNode::Lit(v) => Some(v.clone()),
        TypedNode::Path(p) => {
            let found = lookup(p, expr.ty, ctx);
            if found.is_none() {
                *incomplete = true;
            }
            found
        }
        _ => Some(Scalar::Bool(eval_bool(expr, ctx, incomplete))),
    }
}

fn eval_bool(expr: &TypedExpr, ctx: &EvalContext<'_>, incomplete: &mut bool) -> bool {
    match &expr.node {
        TypedNode::Lit(_) | TypedNode::Path(_) => {
            matches!(eval_scalar(expr, ctx, incomplete), Some(Scalar::Bool(true)))
        }
        TypedNode::Not(e) => !eval_bool(e, ctx, incomplete),
        TypedNode::And(l, r) => eval_bool(l, ctx, incomplete) && eval_bool(r, ctx, incomplete),
        TypedNode::Or(l, r) => eval_bool(l, ctx, incomplete) || eval_bool(r, ctx, incomplete),
        TypedNode::Cmp(op, l, r) => {
            let left = eval_scalar(l, ctx, incomplete);
            let right = eval_scalar(r, ctx, incomplete);
            match (left, right) {
                (Some(a), Some(b)) => a.compare(&b).is_some_and(|ord| op.holds(ord)),
                _ => false,
            }
        }
        TypedNode::InSet(e, name) => match eval_scalar(e, ctx, incomplete) {
            Some(v) => ctx.sets.get(name).is_some_and(|members| {
                members
                    .iter()
                    .any(|m| v.compare(m) == Some(std::cmp::Ordering::Equal))
            }),
            None => false,
        },
    }
}
