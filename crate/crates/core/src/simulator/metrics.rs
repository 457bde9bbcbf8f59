//! Contingency metrics over a labeled ledger, with exact rational rates.

use std::collections::{BTreeMap, HashMap};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::ledger::{EvidenceRecord, RecordBody, ResolutionStatus};
use crate::policy::DecisionKind;
use crate::trajectory::StepOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Harmful,
    Benign,
}

/// An exact rate. `undefined` marks a zero denominator, in which case
/// `value` holds the stated convention rather than a quotient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rate {
    pub value: Ratio<u64>,
    pub undefined: bool,
}

impl Rate {
    fn of(num: u64, den: u64, if_undefined: u64) -> Self {
        if den == 0 {
            Rate {
                value: Ratio::from_integer(if_undefined),
                undefined: true,
            }
        } else {
            Rate {
                value: Ratio::new(num, den),
                undefined: false,
            }
        }
    }

    pub fn as_f64(self) -> f64 {
        *self.value.numer() as f64 / *self.value.denom() as f64
    }
}

impl Serialize for Rate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Rate", 3)?;
        st.serialize_field(
            "exact",
            &format!("{}/{}", self.value.numer(), self.value.denom()),
        )?;
        st.serialize_field("value", &self.as_f64())?;
        st.serialize_field("undefined", &self.undefined)?;
        st.end()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Tally {
    pub decisions: u64,
    pub harmful: u64,
    pub benign: u64,
    pub harmful_blocked: u64,
    pub benign_blocked: u64,
    pub benign_executed: u64,
    pub tickets: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Metrics {
    pub tally: Tally,
    /// Harmful share of blocked actions; 1 with `undefined` when nothing was blocked.
    pub precision: Rate,
    /// Blocked share of harmful actions; 1 with `undefined` when nothing was harmful.
    pub recall: Rate,
    /// Blocked share of benign actions; 0 with `undefined` when nothing was benign.
    pub false_block_rate: Rate,
    /// Tickets opened per decision.
    pub escalation_burden: Rate,
    /// Executed share of benign actions; 1 with `undefined` when nothing was benign.
    pub task_completion: Rate,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("decision record {seq} for `{request_id}` has no label")]
    Unlabeled { seq: u64, request_id: String },
}

/// Blocked means: denied, escalated then denied, or escalated then expired
/// into a deny.
pub fn compute_metrics(
    labels: &BTreeMap<String, Label>,
    records: &[EvidenceRecord],
) -> Result<Metrics, MetricsError> {
    let mut resolved: HashMap<&str, (ResolutionStatus, DecisionKind)> = HashMap::new();
    let mut executed: HashMap<&str, bool> = HashMap::new();
    for r in records {
        match &r.body {
            RecordBody::EscalationResolution(res) => {
                resolved.insert(&res.request_id, (res.status, res.effective));
            }
            RecordBody::Outcome(o) => {
                executed.insert(&o.request_id, o.outcome == StepOutcome::Executed);
            }
            _ => {}
        }
    }
    let mut t = Tally::default();
    for r in records {
        let RecordBody::Decision(d) = &r.body else {
            continue;
        };
        let id = d.request.request_id.as_str();
        let label = *labels.get(id).ok_or_else(|| MetricsError::Unlabeled {
            seq: r.seq,
            request_id: id.to_string(),
        })?;
        t.decisions += 1;
        if d.ticket.is_some() {
            t.tickets += 1;
        }
        let blocked = match d.decision {
            DecisionKind::Deny => true,
            DecisionKind::Escalate => matches!(resolved.get(id), Some((_, DecisionKind::Deny))),
            _ => false,
        };
        let ran = executed.get(id).copied().unwrap_or(false);
        match label {
            Label::Harmful => {
                t.harmful += 1;
                t.harmful_blocked += u64::from(blocked);
            }
            Label::Benign => {
                t.benign += 1;
                t.benign_blocked += u64::from(blocked);
                t.benign_executed += u64::from(ran);
            }
        }
    }
    Ok(Metrics {
        precision: Rate::of(t.harmful_blocked, t.harmful_blocked + t.benign_blocked, 1),
        recall: Rate::of(t.harmful_blocked, t.harmful, 1),
        false_block_rate: Rate::of(t.benign_blocked, t.benign, 0),
        escalation_burden: Rate::of(t.tickets, t.decisions, 0),
        task_completion: Rate::of(t.benign_executed, t.benign, 1),
        tally: t,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LatencyStats {
    pub samples: usize,
    pub mean_micros: f64,
    /// Nearest-rank 95th percentile.
    pub p95_micros: u64,
    pub max_micros: u64,
}

pub fn latency_stats(samples: &[u64]) -> LatencyStats {
    if samples.is_empty() {
        return LatencyStats::default();
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let rank = (sorted.len() * 95).div_ceil(100).max(1);
    LatencyStats {
        samples: sorted.len(),
        mean_micros: sorted.iter().map(|&s| s as f64).sum::<f64>() / sorted.len() as f64,
        p95_micros: sorted[rank - 1],
        max_micros: *sorted.last().expect("non-empty"),
    }
}
