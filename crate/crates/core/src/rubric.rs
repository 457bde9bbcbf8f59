//! Runtime-enforceability scoring and control-layer assignment.
//!
//! Six criteria are each scored 0 (low), 1 (medium) or 2 (high runtime
//! enforceability). Aggregation is defined here, not taken from any external
//! rubric: pre-action observability is a hard gate (0 forces `Low`), and
//! otherwise the summed score is banded 0-3, 4-5, 6-7, 8-9, 10-12.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::policy::{ControlTuple, EvidenceField, OwnerRef, PolicySet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawAnswers")]
pub struct RubricAnswers {
    pub timing_of_harm: u8,
    pub pre_action_observability: u8,
    pub rule_determinacy: u8,
    pub judgment_load: u8,
    pub reversibility_urgency: u8,
    pub evidence_clarity: u8,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnswers {
    timing_of_harm: u8,
    pre_action_observability: u8,
    rule_determinacy: u8,
    judgment_load: u8,
    reversibility_urgency: u8,
    evidence_clarity: u8,
}

impl TryFrom<RawAnswers> for RubricAnswers {
    type Error = String;

    fn try_from(r: RawAnswers) -> Result<Self, String> {
        RubricAnswers::from_array([
            r.timing_of_harm,
            r.pre_action_observability,
            r.rule_determinacy,
            r.judgment_load,
            r.reversibility_urgency,
            r.evidence_clarity,
        ])
    }
}

impl RubricAnswers {
    pub const CRITERIA: [&'static str; 6] = [
        "timing_of_harm",
        "pre_action_observability",
        "rule_determinacy",
        "judgment_load",
        "reversibility_urgency",
        "evidence_clarity",
    ];

    /// Scores in criterion order; each must be 0, 1 or 2.
    pub fn from_array(scores: [u8; 6]) -> Result<Self, String> {
        if let Some((i, s)) = scores.iter().enumerate().find(|(_, &s)| s > 2) {
            return Err(format!(
                "{} scored {s}; scores are 0, 1 or 2",
                Self::CRITERIA[i]
            ));
        }
        let [timing_of_harm, pre_action_observability, rule_determinacy, judgment_load, reversibility_urgency, evidence_clarity] =
            scores;
        Ok(Self {
            timing_of_harm,
            pre_action_observability,
            rule_determinacy,
            judgment_load,
            reversibility_urgency,
            evidence_clarity,
        })
    }

    pub fn to_array(&self) -> [u8; 6] {
        [
            self.timing_of_harm,
            self.pre_action_observability,
            self.rule_determinacy,
            self.judgment_load,
            self.reversibility_urgency,
            self.evidence_clarity,
        ]
    }

    pub fn total(&self) -> u8 {
        self.to_array().iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EnforceabilityClass {
    Low,
    LowToMedium,
    Medium,
    MediumToHigh,
    High,
}

impl EnforceabilityClass {
    pub fn label(self) -> &'static str {
        match self {
            EnforceabilityClass::Low => "Low",
            EnforceabilityClass::LowToMedium => "Low to medium",
            EnforceabilityClass::Medium => "Medium",
            EnforceabilityClass::MediumToHigh => "Medium to high",
            EnforceabilityClass::High => "High",
        }
    }

    /// Reads a label as written in a requirements table. Blended labels name
    /// the band between their two ends regardless of word order.
    pub fn from_label(label: &str) -> Option<Self> {
        Some(match label.trim().to_ascii_lowercase().as_str() {
            "low" => EnforceabilityClass::Low,
            "low to medium" | "medium to low" => EnforceabilityClass::LowToMedium,
            "medium" => EnforceabilityClass::Medium,
            "medium to high" | "high to medium" => EnforceabilityClass::MediumToHigh,
            "high" => EnforceabilityClass::High,
            _ => return None,
        })
    }
}

impl fmt::Display for EnforceabilityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub fn score_rubric(a: &RubricAnswers) -> EnforceabilityClass {
    if a.pre_action_observability == 0 {
        return EnforceabilityClass::Low;
    }
    match a.total() {
        0..=3 => EnforceabilityClass::Low,
        4..=5 => EnforceabilityClass::LowToMedium,
        6..=7 => EnforceabilityClass::Medium,
        8..=9 => EnforceabilityClass::MediumToHigh,
        _ => EnforceabilityClass::High,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Governance,
    DesignTime,
    Runtime,
    Assurance,
}

impl Layer {
    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Governance => "governance",
            Layer::DesignTime => "design_time",
            Layer::Runtime => "runtime",
            Layer::Assurance => "assurance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerAssignment {
    pub layers: BTreeSet<Layer>,
    /// Ambiguous or judgment-heavy decisions whose harm must be prevented
    /// up front go to a human by default.
    pub escalation_default: bool,
}

pub fn assign_layers(class: EnforceabilityClass, a: &RubricAnswers) -> LayerAssignment {
    let mut layers = BTreeSet::from([Layer::Governance, Layer::DesignTime, Layer::Assurance]);
    if class >= EnforceabilityClass::Medium {
        layers.insert(Layer::Runtime);
    }
    let escalation_default =
        (a.rule_determinacy <= 1 || a.judgment_load <= 1) && a.timing_of_harm == 2;
    LayerAssignment {
        layers,
        escalation_default,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RubricRow {
    pub tuple_id: String,
    /// `None` when the tuple carries no rubric answers (UNSCORED).
    pub class: Option<EnforceabilityClass>,
    pub total: Option<u8>,
    pub layers: Option<LayerAssignment>,
    pub owner: OwnerRef,
    pub evidence: Vec<EvidenceField>,
    pub review_note: String,
}

impl RubricRow {
    pub fn is_scored(&self) -> bool {
        self.class.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RubricReport {
    pub aggregation: &'static str,
    pub rows: Vec<RubricRow>,
}

pub const AGGREGATION_NOTE: &str =
    "artifact-defined aggregation: observability=0 forces Low; otherwise sum of six 0-2 scores banded 0-3 Low, 4-5 Low to medium, 6-7 Medium, 8-9 Medium to high, 10-12 High";

fn row_for(t: &ControlTuple) -> RubricRow {
    let scored = t.rubric_answers.map(|a| {
        let class = score_rubric(&a);
        (class, a.total(), assign_layers(class, &a))
    });
    RubricRow {
        tuple_id: t.id.clone(),
        class: scored.as_ref().map(|s| s.0),
        total: scored.as_ref().map(|s| s.1),
        layers: scored.map(|s| s.2),
        owner: t.owner.clone(),
        evidence: t
            .evidence
            .as_ref()
            .map(|e| e.required_fields().iter().copied().collect())
            .unwrap_or_default(),
        review_note: t.review_note.clone(),
    }
}

/// One row per tuple, ordered by tuple id.
pub fn rubric_report(ps: &PolicySet) -> RubricReport {
    let mut rows: Vec<RubricRow> = ps.tuples.iter().map(row_for).collect();
    rows.sort_by(|a, b| a.tuple_id.cmp(&b.tuple_id));
    RubricReport {
        aggregation: AGGREGATION_NOTE,
        rows,
    }
}

/// Overlays externally recorded answers (tuple id -> answers) onto a policy.
pub fn apply_answers(
    ps: &mut PolicySet,
    answers: &BTreeMap<String, RubricAnswers>,
) -> Result<(), String> {
    for (id, a) in answers {
        let tuple = ps
            .tuples
            .iter_mut()
            .find(|t| &t.id == id)
            .ok_or_else(|| format!("answers given for unknown control `{id}`"))?;
        tuple.rubric_answers = Some(*a);
    }
    Ok(())
}

impl RubricReport {
    pub fn render_table(&self) -> String {
        let mut lines = vec![format!("# {}", self.aggregation)];
        let header = [
            "control",
            "score",
            "enforceability",
            "layers",
            "escalate",
            "owner",
            "evidence",
        ];
        let mut table: Vec<[String; 7]> = vec![header.map(String::from)];
        for row in &self.rows {
            let (score, class, layers, esc) = match (&row.class, &row.layers) {
                (Some(c), Some(l)) => (
                    row.total.map(|t| t.to_string()).unwrap_or_default(),
                    c.label().to_string(),
                    l.layers
                        .iter()
                        .map(|l| l.as_str())
                        .collect::<Vec<_>>()
                        .join("+"),
                    if l.escalation_default { "yes" } else { "no" }.to_string(),
                ),
                _ => ("-".into(), "UNSCORED".into(), "-".into(), "-".into()),
            };
            table.push([
                row.tuple_id.clone(),
                score,
                class,
                layers,
                esc,
                format!("{} ({})", row.owner.identity, row.owner.role),
                row.evidence
                    .iter()
                    .map(|e| e.as_str())
                    .collect::<Vec<_>>()
                    .join(","),
            ]);
        }
        let widths: Vec<usize> = (0..7)
            .map(|c| {
                table
                    .iter()
                    .map(|r| r[c].chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        for r in &table {
            let cells: Vec<String> = r
                .iter()
                .zip(&widths)
                .map(|(cell, w)| format!("{cell:<w$}"))
                .collect();
            lines.push(cells.join("  ").trim_end().to_string());
        }
        lines.join("\n") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn answers(s: [u8; 6]) -> RubricAnswers {
        RubricAnswers::from_array(s).unwrap()
    }

    #[test]
    fn unanimous_high() {
        assert_eq!(score_rubric(&answers([2; 6])), EnforceabilityClass::High);
    }

    #[test]
    fn observability_gate() {
        assert_eq!(
            score_rubric(&answers([2, 0, 2, 2, 2, 2])),
            EnforceabilityClass::Low
        );
    }

    #[test]
    fn band_edges() {
        assert_eq!(
            score_rubric(&answers([0, 1, 1, 1, 0, 0])),
            EnforceabilityClass::Low
        );
        assert_eq!(
            score_rubric(&answers([0, 1, 1, 1, 1, 0])),
            EnforceabilityClass::LowToMedium
        );
        assert_eq!(
            score_rubric(&answers([1, 1, 1, 1, 1, 1])),
            EnforceabilityClass::Medium
        );
        assert_eq!(
            score_rubric(&answers([2, 2, 2, 1, 1, 0])),
            EnforceabilityClass::MediumToHigh
        );
        assert_eq!(
            score_rubric(&answers([2, 2, 2, 2, 1, 1])),
            EnforceabilityClass::High
        );
    }

    #[test]
    fn layer_rules() {
        let all = answers([2; 6]);
        let l = assign_layers(EnforceabilityClass::High, &all);
        assert_eq!(
            l.layers,
            BTreeSet::from([
                Layer::Governance,
                Layer::DesignTime,
                Layer::Runtime,
                Layer::Assurance
            ])
        );
        assert!(!l.escalation_default);

        let fair = answers([0, 1, 0, 0, 0, 1]);
        let l = assign_layers(score_rubric(&fair), &fair);
        assert_eq!(
            l.layers,
            BTreeSet::from([Layer::Governance, Layer::DesignTime, Layer::Assurance])
        );

        let med = answers([2, 1, 1, 1, 1, 0]);
        assert_eq!(score_rubric(&med), EnforceabilityClass::Medium);
        let l = assign_layers(EnforceabilityClass::Medium, &med);
        assert!(l.layers.contains(&Layer::Runtime));
        assert!(l.escalation_default);
    }

    #[test]
    fn answers_reject_out_of_range() {
        assert!(RubricAnswers::from_array([3, 0, 0, 0, 0, 0]).is_err());
        let bad = r#"{"timing_of_harm":2,"pre_action_observability":5,"rule_determinacy":2,"judgment_load":2,"reversibility_urgency":2,"evidence_clarity":2}"#;
        assert!(serde_json::from_str::<RubricAnswers>(bad).is_err());
    }

    #[test]
    fn table_labels() {
        assert_eq!(
            EnforceabilityClass::from_label("High to medium"),
            Some(EnforceabilityClass::MediumToHigh)
        );
        assert_eq!(
            EnforceabilityClass::from_label("Medium to high"),
            Some(EnforceabilityClass::MediumToHigh)
        );
        assert_eq!(
            EnforceabilityClass::from_label("Low"),
            Some(EnforceabilityClass::Low)
        );
        assert_eq!(EnforceabilityClass::from_label("sometimes"), None);
    }
}
