//! Seeded random policy packs, requests and trajectory histories.

use std::collections::BTreeMap;

use chrono::{TimeZone, Utc};
use guardrail_core::condition::{AttrPath, CmpOp, Expr, Namespace};
use guardrail_core::decimal::Decimal;
use guardrail_core::policy::{
    AccumulatorDecl, AccumulatorKind, ActionRequest, Attestation, ControlTuple, DecisionAction,
    DecisionSpec, EscalateParams, EvidenceField, EvidenceSpec, Guard, GuardDefault, OwnerRef,
    PolicySet, Principal, PrincipalKind, RewriteOp, TimeoutAction,
};
use guardrail_core::value::{Scalar, ScalarType};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const ACTIONS: [&str; 5] = [
    "create_order",
    "create_invoice",
    "read_catalog",
    "delete_record",
    "query_hr",
];
pub const RESOURCES: [&str; 4] = ["vendor:V-1", "vendor:V-2", "hr:emp", "catalog:main"];
const ACTOR_GLOBS: [&str; 5] = ["*", "agent:*", "human:*", "agent:bot-1", "*:alice"];
const ACTION_GLOBS: [&str; 6] = [
    "*",
    "create_*",
    "create_order",
    "read_*",
    "delete_record",
    "*_hr",
];
const RESOURCE_GLOBS: [&str; 4] = ["*", "vendor:*", "hr:*", "vendor:V-1"];
const STRINGS: [&str; 6] = ["V-1", "V-2", "V-3", "eu", "us", "agent"];
const NOW_BASE: i64 = 1_767_600_000;

fn dec(rng: &mut ChaCha8Rng, max_units: i64) -> Decimal {
    Decimal::from_scaled(rng.random_range(0..max_units * 10_000) / 100 * 100)
}

fn number(rng: &mut ChaCha8Rng, max: i64) -> Scalar {
    if rng.random_bool(0.5) {
        Scalar::Int(rng.random_range(0..max))
    } else {
        Scalar::Dec(dec(rng, max))
    }
}

fn path(ns: Namespace, name: &str) -> Box<Expr> {
    Box::new(Expr::Path(AttrPath::new(ns, name)))
}

fn atom(rng: &mut ChaCha8Rng) -> Expr {
    let op = *CmpOp::ALL.choose(rng).unwrap();
    let cmp = |rng: &mut ChaCha8Rng, p: Box<Expr>, lit: Scalar, op: CmpOp| {
        if rng.random_bool(0.2) {
            Expr::Cmp(op, Box::new(Expr::Lit(lit)), p)
        } else {
            Expr::Cmp(op, p, Box::new(Expr::Lit(lit)))
        }
    };
    match rng.random_range(0..10) {
        0 | 1 => {
            let lit = number(rng, 10_000);
            cmp(rng, path(Namespace::Request, "amount"), lit, op)
        }
        2 => {
            let lit = number(rng, 20);
            cmp(rng, path(Namespace::Request, "qty"), lit, op)
        }
        3 => {
            let (name, max) = *[("total_spend", 20_000), ("orders", 6), ("vendors_seen", 4)]
                .choose(rng)
                .unwrap();
            let lit = number(rng, max);
            cmp(rng, path(Namespace::Trajectory, name), lit, op)
        }
        4 => {
            let lit = Scalar::Int(NOW_BASE + rng.random_range(0..1000));
            cmp(rng, path(Namespace::Env, "now"), lit, op)
        }
        5 | 6 => {
            let name = *[
                "vendor_id",
                "region",
                "action",
                "principal_kind",
                "resource",
                "principal_id",
            ]
            .choose(rng)
            .unwrap();
            let lit = match name {
                "action" => ACTIONS.choose(rng).unwrap().to_string(),
                "resource" => RESOURCES.choose(rng).unwrap().to_string(),
                "principal_kind" => ["agent", "human", "sub_agent"]
                    .choose(rng)
                    .unwrap()
                    .to_string(),
                "principal_id" => ["bot-1", "bot-2", "alice"].choose(rng).unwrap().to_string(),
                _ => STRINGS.choose(rng).unwrap().to_string(),
            };
            let op = if rng.random_bool(0.5) {
                CmpOp::Eq
            } else {
                CmpOp::Ne
            };
            cmp(rng, path(Namespace::Request, name), Scalar::Str(lit), op)
        }
        7 => {
            if rng.random_bool(0.5) {
                Expr::Path(AttrPath::new(Namespace::Request, "urgent"))
            } else {
                Expr::Cmp(
                    CmpOp::Eq,
                    path(Namespace::Request, "urgent"),
                    Box::new(Expr::Lit(Scalar::Bool(rng.random()))),
                )
            }
        }
        8 => {
            let (field, set) = *[
                ("vendor_id", "vendors"),
                ("region", "regions"),
                ("qty", "qtys"),
            ]
            .choose(rng)
            .unwrap();
            Expr::InSet(path(Namespace::Request, field), set.into())
        }
        _ => Expr::Lit(Scalar::Bool(rng.random_bool(0.7))),
    }
}

pub fn expr(rng: &mut ChaCha8Rng, depth: u32) -> Expr {
    if depth == 0 || rng.random_bool(0.35) {
        return atom(rng);
    }
    match rng.random_range(0..3) {
        0 => Expr::Not(Box::new(expr(rng, depth - 1))),
        1 => Expr::And(
            Box::new(expr(rng, depth - 1)),
            Box::new(expr(rng, depth - 1)),
        ),
        _ => Expr::Or(
            Box::new(expr(rng, depth - 1)),
            Box::new(expr(rng, depth - 1)),
        ),
    }
}

fn rewrite_op(rng: &mut ChaCha8Rng) -> RewriteOp {
    match rng.random_range(0..8) {
        0 => RewriteOp::Set {
            field: "qty".into(),
            value: Scalar::Int(rng.random_range(0..20)),
        },
        1 => RewriteOp::Set {
            field: "region".into(),
            value: Scalar::Str(STRINGS[3 + rng.random_range(0..2)].into()),
        },
        2 | 3 => {
            let lo = rng.random_range(0..3000);
            let hi = lo + rng.random_range(0..5000);
            RewriteOp::Clamp {
                field: "amount".into(),
                min: Scalar::Int(lo),
                max: Scalar::Dec(Decimal::from_int(hi).unwrap()),
            }
        }
        4 => RewriteOp::Clamp {
            field: "qty".into(),
            min: Scalar::Int(1),
            max: Scalar::Int(rng.random_range(1..10)),
        },
        5 => RewriteOp::Redact {
            field: "note".into(),
        },
        6 => RewriteOp::Set {
            field: "urgent".into(),
            value: Scalar::Bool(rng.random()),
        },
        _ => {
            if rng.random_bool(0.3) {
                RewriteOp::Clamp {
                    field: "note".into(),
                    min: Scalar::Int(0),
                    max: Scalar::Int(1),
                }
            } else {
                RewriteOp::Redact {
                    field: "region".into(),
                }
            }
        }
    }
}

fn decision(rng: &mut ChaCha8Rng) -> DecisionAction {
    match rng.random_range(0..20) {
        0..=5 => DecisionAction::Allow,
        6..=8 => DecisionAction::Deny,
        9..=11 => DecisionAction::LogOnly,
        12..=14 => DecisionAction::Escalate(EscalateParams {
            approver_role: "manager".into(),
            timeout_seconds: rng.random_range(1..100_000),
            on_timeout: if rng.random_bool(0.2) {
                TimeoutAction::Allow
            } else {
                TimeoutAction::Deny
            },
        }),
        _ => DecisionAction::Rewrite(
            (0..rng.random_range(1..3))
                .map(|_| rewrite_op(rng))
                .collect(),
        ),
    }
}

pub fn policy(rng: &mut ChaCha8Rng) -> PolicySet {
    let mut ps = PolicySet::default();
    ps.sets.insert(
        "vendors".into(),
        vec![Scalar::Str("V-1".into()), Scalar::Str("V-2".into())],
    );
    ps.sets
        .insert("regions".into(), vec![Scalar::Str("eu".into())]);
    ps.sets.insert(
        "qtys".into(),
        vec![Scalar::Int(1), Scalar::Int(2), Scalar::Int(3)],
    );
    for (name, ty) in [
        ("amount", ScalarType::Decimal),
        ("qty", ScalarType::Integer),
        ("vendor_id", ScalarType::String),
        ("region", ScalarType::String),
        ("urgent", ScalarType::Boolean),
        ("note", ScalarType::String),
    ] {
        ps.fields.insert(name.into(), ty);
    }
    for _ in 0..rng.random_range(0..3) {
        let pattern = ["create_*", "delete_*", "*", "query_hr"]
            .choose(rng)
            .unwrap()
            .to_string();
        let default = if rng.random_bool(0.75) {
            GuardDefault::Deny
        } else {
            GuardDefault::Allow
        };
        ps.guards.push(Guard { pattern, default });
    }
    ps.accumulators = vec![
        AccumulatorDecl {
            name: "total_spend".into(),
            kind: AccumulatorKind::Sum,
            action_pattern: "create_*".into(),
            field: Some("amount".into()),
        },
        AccumulatorDecl {
            name: "orders".into(),
            kind: AccumulatorKind::Count,
            action_pattern: "create_*".into(),
            field: None,
        },
        AccumulatorDecl {
            name: "vendors_seen".into(),
            kind: AccumulatorKind::DistinctCount,
            action_pattern: "*".into(),
            field: Some("vendor_id".into()),
        },
    ];
    for i in 0..rng.random_range(2..10) {
        let precondition = if rng.random_bool(0.15) {
            Expr::always()
        } else {
            expr(rng, 3)
        };
        ps.tuples.push(ControlTuple {
            id: format!("t{i}"),
            actor_selector: ACTOR_GLOBS.choose(rng).unwrap().to_string(),
            action_selector: ACTION_GLOBS.choose(rng).unwrap().to_string(),
            resource_selector: RESOURCE_GLOBS.choose(rng).unwrap().to_string(),
            precondition,
            decision: DecisionSpec {
                action: decision(rng),
                reason: if rng.random_bool(0.5) {
                    format!("reason {i}")
                } else {
                    String::new()
                },
            },
            evidence: Some(EvidenceSpec::new(
                [EvidenceField::Args],
                if rng.random_bool(0.3) {
                    Attestation::KeyedSignature
                } else {
                    Attestation::HashChainOnly
                },
            )),
            owner: OwnerRef::new(format!("owner-{i}"), "team"),
            review_note: String::new(),
            rubric_answers: None,
        });
    }
    ps
}

fn arg_value(rng: &mut ChaCha8Rng, field: &str) -> Scalar {
    // one in ten values has the wrong type
    if rng.random_bool(0.1) {
        return match rng.random_range(0..3) {
            0 => Scalar::Str("oops".into()),
            1 => Scalar::Bool(true),
            _ => Scalar::Dec(Decimal::from_scaled(12_345)),
        };
    }
    match field {
        "amount" => number(rng, 10_000),
        "qty" => Scalar::Int(rng.random_range(0..12)),
        "vendor_id" => Scalar::Str(STRINGS[rng.random_range(0..3)].into()),
        "region" => Scalar::Str(STRINGS[3 + rng.random_range(0..2)].into()),
        "urgent" => Scalar::Bool(rng.random()),
        _ => Scalar::Str("free text".into()),
    }
}

pub fn request(rng: &mut ChaCha8Rng, id: String, trajectory: &str, step: u64) -> ActionRequest {
    let kind = *[
        PrincipalKind::Agent,
        PrincipalKind::Human,
        PrincipalKind::SubAgent,
        PrincipalKind::Service,
    ]
    .choose(rng)
    .unwrap();
    let mut principal = Principal::new(*["bot-1", "bot-2", "alice"].choose(rng).unwrap(), kind);
    if kind == PrincipalKind::SubAgent {
        principal.delegation_chain = vec!["alice".into()];
    }
    let mut args = BTreeMap::new();
    for field in ["amount", "qty", "vendor_id", "region", "urgent", "note"] {
        if rng.random_bool(0.8) {
            args.insert(field.to_string(), arg_value(rng, field));
        }
    }
    ActionRequest {
        request_id: id,
        principal,
        action: ACTIONS.choose(rng).unwrap().to_string(),
        resource: RESOURCES.choose(rng).unwrap().to_string(),
        args,
        trajectory_id: trajectory.to_string(),
        step_index: step,
        timestamp: Utc.timestamp_opt(NOW_BASE, 0).unwrap(),
    }
}

pub fn now(rng: &mut ChaCha8Rng) -> i64 {
    NOW_BASE + rng.random_range(0..1000)
}
