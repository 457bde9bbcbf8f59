//! Control tuples, policy sets, the policy file format and tuple matching.

mod glob;
mod model;
mod parse;
mod print;
mod validate;

pub use glob::glob_match;
pub use model::*;
pub use parse::{parse_policy_file, ParseErrorList, PolicyError};
pub use print::{decision_text, print_policy};
pub use validate::{
    policy_pack_hash, schema_for, validate_policy, validate_tuple, ValidatedPolicy,
    ValidationReport, Violation, ViolationCode,
};

/// Parse then validate; the combined report is what `lint` and the gateway's
/// validation endpoint return.
pub fn load_policy(text: &str) -> Result<ValidatedPolicy, ValidationReport> {
    let set = parse_policy_file(text).map_err(|errors| ValidationReport {
        parse_errors: errors.0,
        violations: vec![],
    })?;
    ValidatedPolicy::new(set)
}

pub fn tuple_matches(t: &ControlTuple, req: &ActionRequest) -> bool {
    glob_match(&t.actor_selector, &req.principal.selector_key())
        && glob_match(&t.action_selector, &req.action)
        && glob_match(&t.resource_selector, &req.resource)
}

/// Tuples whose actor, action and resource selectors all match, in
/// document order. Preconditions are not evaluated here.
pub fn match_tuples<'p>(ps: &'p PolicySet, req: &ActionRequest) -> Vec<&'p ControlTuple> {
    ps.tuples.iter().filter(|t| tuple_matches(t, req)).collect()
}
