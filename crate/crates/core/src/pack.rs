//! Bundled procurement policy packs, rubric answers and scenarios.

pub const PROCUREMENT_POLICY: &str = include_str!("../assets/packs/procurement.policy");
pub const PROCUREMENT_RUBRIC_ANSWERS: &str =
    include_str!("../assets/packs/procurement.rubric.json");
pub const CUMULATIVE_POLICY: &str = include_str!("../assets/packs/cumulative_spend.policy");
pub const GOLDEN_SCENARIO: &str = include_str!("../assets/scenarios/procurement_golden.json");
pub const CUMULATIVE_SCENARIO: &str = include_str!("../assets/scenarios/cumulative_spend.json");

/// Enforceability labels the procurement requirements are expected to
/// receive, keyed by control id.
pub const PROCUREMENT_EXPECTED_LABELS: [(&str, &str); 5] = [
    ("vendor-allowlist", "High"),
    ("po-threshold", "High"),
    ("least-privilege-scope", "High to medium"),
    ("supplier-ranking-review", "Low"),
    ("state-change-telemetry", "Medium to high"),
];

pub fn procurement_policy() -> crate::policy::ValidatedPolicy {
    crate::policy::load_policy(PROCUREMENT_POLICY).expect("bundled procurement pack is valid")
}

pub fn cumulative_policy() -> crate::policy::ValidatedPolicy {
    crate::policy::load_policy(CUMULATIVE_POLICY).expect("bundled cumulative pack is valid")
}
