//! Canonical printer; `parse_policy_file(&print_policy(ps))` yields `ps`.

use std::fmt::Write;

use super::model::*;
use crate::value::quote;

pub fn print_policy(ps: &PolicySet) -> String {
    let mut out = String::new();
    for (name, members) in &ps.sets {
        let items: Vec<String> = members.iter().map(|m| m.to_literal()).collect();
        let _ = writeln!(out, "set {name} = [{}]", items.join(", "));
    }
    section_break(&mut out);
    for (name, ty) in &ps.fields {
        let _ = writeln!(out, "field {name}: {ty}");
    }
    section_break(&mut out);
    for guard in &ps.guards {
        let default = match guard.default {
            GuardDefault::Allow => "allow",
            GuardDefault::Deny => "deny",
        };
        let _ = writeln!(out, "guard {} default {default}", guard.pattern);
    }
    section_break(&mut out);
    for acc in &ps.accumulators {
        let source = match &acc.field {
            Some(field) => format!("{}.{field}", acc.action_pattern),
            None => acc.action_pattern.clone(),
        };
        let _ = writeln!(out, "track {} = {}({source})", acc.name, acc.kind.keyword());
    }
    for tuple in &ps.tuples {
        section_break(&mut out);
        print_tuple(&mut out, tuple);
    }
    out
}

fn section_break(out: &mut String) {
    if !out.is_empty() && !out.ends_with("\n\n") {
        out.push('\n');
    }
}

pub fn print_tuple(out: &mut String, t: &ControlTuple) {
    let _ = writeln!(out, "control {} {{", quote(&t.id));
    let _ = writeln!(out, "  actor: {}", t.actor_selector);
    let _ = writeln!(out, "  action: {}", t.action_selector);
    let _ = writeln!(out, "  resource: {}", t.resource_selector);
    if !t.precondition.is_always() {
        let _ = writeln!(out, "  when: {}", t.precondition);
    }
    let _ = writeln!(out, "  decision: {}", decision_text(&t.decision.action));
    if !t.decision.reason.is_empty() {
        let _ = writeln!(out, "  reason: {}", quote(&t.decision.reason));
    }
    if let Some(ev) = &t.evidence {
        let fields: Vec<&str> = ev.required_fields().iter().map(|f| f.as_str()).collect();
        let signed = if ev.attestation == Attestation::KeyedSignature {
            " signed"
        } else {
            ""
        };
        let _ = writeln!(out, "  evidence: [{}]{signed}", fields.join(", "));
    }
    if t.owner != OwnerRef::default() {
        let _ = writeln!(
            out,
            "  owner: {} role {}",
            quote(&t.owner.identity),
            quote(&t.owner.role)
        );
    }
    if !t.review_note.is_empty() {
        let _ = writeln!(out, "  note: {}", quote(&t.review_note));
    }
    if let Some(r) = &t.rubric_answers {
        let scores: Vec<String> = r.to_array().iter().map(u8::to_string).collect();
        let _ = writeln!(out, "  rubric: [{}]", scores.join(", "));
    }
    out.push_str("}\n");
}

pub fn decision_text(action: &DecisionAction) -> String {
    match action {
        DecisionAction::Allow => "allow".into(),
        DecisionAction::Deny => "deny".into(),
        DecisionAction::LogOnly => "log_only".into(),
        DecisionAction::Escalate(p) => {
            let on_timeout = match p.on_timeout {
                TimeoutAction::Deny => "deny",
                TimeoutAction::Allow => "allow",
            };
            format!(
                "escalate(approver_role={}, timeout_seconds={}, on_timeout={on_timeout})",
                quote(&p.approver_role),
                p.timeout_seconds
            )
        }
        DecisionAction::Rewrite(ops) => {
            let ops: Vec<String> = ops
                .iter()
                .map(|op| match op {
                    RewriteOp::Set { field, value } => {
                        format!("set({field}, {})", value.to_literal())
                    }
                    RewriteOp::Clamp { field, min, max } => {
                        format!("clamp({field}, {}, {})", min.to_literal(), max.to_literal())
                    }
                    RewriteOp::Redact { field } => format!("redact({field})"),
                })
                .collect();
            format!("rewrite({})", ops.join(", "))
        }
    }
}
