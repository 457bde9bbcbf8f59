//! Scripted scenario runner on a simulated clock, plus labeled-corpus metrics.

mod metrics;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

use crate::clock::{Clock, ManualClock};
use crate::engine::{DecideError, Engine, EngineError};
use crate::escalation::{EscalationTicket, Verdict};
use crate::ledger::{EvidenceRecord, Ledger, RecordBody, ResolutionStatus};
use crate::policy::{ActionRequest, DecisionKind, OwnerRef, Principal, ValidatedPolicy};
use crate::trajectory::StepOutcome;
use crate::value::Scalar;

pub use metrics::{
    compute_metrics, latency_stats, Label, LatencyStats, Metrics, MetricsError, Rate, Tally,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanResponse {
    pub verdict: Verdict,
    pub delay_seconds: i64,
    /// Defaults to a scripted approver holding the ticket's required role.
    #[serde(default)]
    pub approver: Option<OwnerRef>,
    #[serde(default)]
    pub reason: String,
}

/// A request as written in a scenario; step index and timestamp are
/// filled in by the runner unless given.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRequest {
    pub request_id: String,
    pub principal: Principal,
    pub action: String,
    pub resource: String,
    #[serde(default)]
    pub args: BTreeMap<String, Scalar>,
    pub trajectory_id: String,
    #[serde(default)]
    pub step_index: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActualOutcome {
    Executed,
    Blocked,
    /// Escalation timed out into a deny.
    Expired,
    Pending,
    Failed,
    /// The request never reached a decision (rejected as malformed or out of order).
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioStep {
    pub offset_seconds: i64,
    pub label: Label,
    pub expected_decision: DecisionKind,
    #[serde(default)]
    pub expected_outcome: Option<ActualOutcome>,
    #[serde(default)]
    pub human_response: Option<HumanResponse>,
    pub request: ScenarioRequest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Policy file, relative to the scenario file.
    #[serde(default)]
    pub policy: Option<String>,
    #[serde(with = "crate::clock::rfc3339")]
    pub start: DateTime<Utc>,
    /// When set, the clock advances here after the last step so that
    /// unanswered tickets can expire.
    #[serde(default)]
    pub end_offset_seconds: Option<i64>,
    pub steps: Vec<ScenarioStep>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error("scenario names no policy file")]
    NoPolicy,
    #[error("step {index}: offset {offset} is earlier than the previous step")]
    Unordered { index: usize, offset: i64 },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.check()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// The referenced policy path, resolved against the scenario's directory.
    pub fn policy_path(&self, scenario_path: &Path) -> Result<PathBuf, ScenarioError> {
        let rel = self.policy.as_ref().ok_or(ScenarioError::NoPolicy)?;
        Ok(scenario_path.parent().unwrap_or(Path::new(".")).join(rel))
    }

    fn check(&self) -> Result<(), ScenarioError> {
        let mut last = i64::MIN;
        for (index, step) in self.steps.iter().enumerate() {
            if step.offset_seconds < last {
                return Err(ScenarioError::Unordered {
                    index,
                    offset: step.offset_seconds,
                });
            }
            last = step.offset_seconds;
        }
        Ok(())
    }

    pub fn labels(&self) -> BTreeMap<String, Label> {
        self.steps
            .iter()
            .map(|s| (s.request.request_id.clone(), s.label))
            .collect()
    }
}

/// Supplies the human side of escalations.
pub trait Responder {
    fn respond(&mut self, step: &ScenarioStep, ticket: &EscalationTicket) -> Option<HumanResponse>;
}

/// Answers exactly as each step's `human_response` says.
#[derive(Debug, Default, Clone, Copy)]
pub struct ScriptedResponder;

impl Responder for ScriptedResponder {
    fn respond(
        &mut self,
        step: &ScenarioStep,
        _ticket: &EscalationTicket,
    ) -> Option<HumanResponse> {
        step.human_response.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepReport {
    pub index: usize,
    pub request_id: String,
    pub label: Label,
    pub expected_decision: DecisionKind,
    pub actual_decision: Option<DecisionKind>,
    pub reason: String,
    pub ticket_id: Option<String>,
    pub evidence_seq: Option<u64>,
    pub expected_outcome: Option<ActualOutcome>,
    pub actual_outcome: ActualOutcome,
    pub matched: bool,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub scenario: String,
    pub pack_hash: String,
    pub steps: Vec<StepReport>,
    pub all_matched: bool,
    pub metrics: Metrics,
    pub ledger_head_hash: String,
    pub ledger: Vec<EvidenceRecord>,
}

/// A report plus the wall-clock decision latencies, which are kept apart
/// because they differ from run to run.
#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub report: SimulationReport,
    pub latency: LatencyStats,
    pub ledger_jsonl: String,
}

struct Pending {
    step: usize,
    ticket_id: String,
    response: HumanResponse,
}

pub fn run_scenario(
    scenario: &Scenario,
    policy: ValidatedPolicy,
    ledger: Ledger,
    responder: &mut dyn Responder,
) -> Result<SimulationRun, ScenarioError> {
    let clock = Arc::new(ManualClock::new(scenario.start));
    let pack_hash = policy.pack_hash().to_string();
    let engine = Engine::new(policy, ledger, clock.clone(), &scenario.name)?;
    let at = |offset: i64| scenario.start + TimeDelta::seconds(offset);

    let mut steps: Vec<StepReport> = Vec::with_capacity(scenario.steps.len());
    let mut next_index: HashMap<&str, u64> = HashMap::new();
    let mut queue: BTreeMap<(i64, usize), Pending> = BTreeMap::new();
    let mut latencies = Vec::new();

    let deliver = |queue: &mut BTreeMap<(i64, usize), Pending>,
                   until: Option<i64>,
                   steps: &mut Vec<StepReport>| {
        while let Some(entry) = queue.first_entry() {
            let (time, _) = *entry.key();
            if until.is_some_and(|u| time > u) {
                break;
            }
            let p = entry.remove();
            clock.set(at(time));
            let role = engine
                .ticket(&p.ticket_id)
                .map(|t| t.approver_role)
                .unwrap_or_default();
            let approver = p
                .response
                .approver
                .clone()
                .unwrap_or_else(|| OwnerRef::new("scripted-approver", role));
            match engine.resolve(
                &p.ticket_id,
                approver,
                p.response.verdict,
                &p.response.reason,
            ) {
                Ok(t) if t.effective == Some(DecisionKind::Allow) => {
                    if let Err(e) =
                        engine.report_outcome(&t.request.request_id, StepOutcome::Executed, "")
                    {
                        steps[p.step].notes.push(format!("outcome refused: {e}"));
                    }
                }
                Ok(_) => {}
                Err(e) => steps[p.step].notes.push(format!("resolution refused: {e}")),
            }
        }
    };

    for (index, step) in scenario.steps.iter().enumerate() {
        deliver(&mut queue, Some(step.offset_seconds), &mut steps);
        clock.set(at(step.offset_seconds));
        let r = &step.request;
        let counter = next_index.entry(r.trajectory_id.as_str()).or_insert(0);
        let step_index = r.step_index.unwrap_or(*counter);
        *counter = step_index + 1;
        let req = ActionRequest {
            request_id: r.request_id.clone(),
            principal: r.principal.clone(),
            action: r.action.clone(),
            resource: r.resource.clone(),
            args: r.args.clone(),
            trajectory_id: r.trajectory_id.clone(),
            step_index,
            timestamp: clock.now(),
        };
        let mut report = StepReport {
            index,
            request_id: req.request_id.clone(),
            label: step.label,
            expected_decision: step.expected_decision,
            actual_decision: None,
            reason: String::new(),
            ticket_id: None,
            evidence_seq: None,
            expected_outcome: step.expected_outcome,
            actual_outcome: ActualOutcome::Rejected,
            matched: false,
            notes: Vec::new(),
        };
        match engine.decide(&req) {
            Ok(result) => {
                latencies.push(result.elapsed_micros);
                report.actual_decision = Some(result.decision);
                report.reason = result.reason.clone();
                report.ticket_id = result.ticket_id.clone();
                report.evidence_seq = result.evidence_seq;
                if result.decision.permits_execution() {
                    if let Err(e) =
                        engine.report_outcome(&req.request_id, StepOutcome::Executed, "")
                    {
                        report.notes.push(format!("outcome refused: {e}"));
                    }
                }
                if let Some(ticket) = result.ticket_id.as_deref().and_then(|id| engine.ticket(id)) {
                    if let Some(response) = responder.respond(step, &ticket) {
                        let due = step.offset_seconds + response.delay_seconds.max(0);
                        queue.insert(
                            (due, index),
                            Pending {
                                step: index,
                                ticket_id: ticket.ticket_id,
                                response,
                            },
                        );
                    }
                }
            }
            Err(e) => report.notes.push(decide_error_note(&e)),
        }
        steps.push(report);
    }
    deliver(&mut queue, None, &mut steps);
    if let Some(end) = scenario.end_offset_seconds {
        if at(end) > clock.now() {
            clock.set(at(end));
        }
        for t in engine.expire_tickets() {
            if t.effective == Some(DecisionKind::Allow) {
                let _ = engine.report_outcome(
                    &t.request.request_id,
                    StepOutcome::Executed,
                    "auto-allowed on timeout",
                );
            }
        }
    }

    let records = engine.ledger_records(0, None, usize::MAX);
    let outcomes = final_outcomes(&records);
    for s in &mut steps {
        if s.actual_decision.is_some() {
            s.actual_outcome = outcomes
                .get(s.request_id.as_str())
                .copied()
                .unwrap_or(ActualOutcome::Pending);
        }
        s.matched = s.actual_decision == Some(s.expected_decision)
            && s.expected_outcome.is_none_or(|o| o == s.actual_outcome);
    }
    let labels = scenario.labels();
    let metrics = compute_metrics(&labels, &records)
        .expect("every decided request comes from a labeled step");
    let report = SimulationReport {
        scenario: scenario.name.clone(),
        pack_hash,
        all_matched: steps.iter().all(|s| s.matched),
        steps,
        metrics,
        ledger_head_hash: records
            .last()
            .map_or(crate::ledger::GENESIS_HASH.to_string(), |r| r.hash.clone()),
        ledger: records,
    };
    Ok(SimulationRun {
        report,
        latency: latency_stats(&latencies),
        ledger_jsonl: engine.ledger_jsonl(),
    })
}

fn decide_error_note(e: &DecideError) -> String {
    format!("request rejected: {e}")
}

/// Where each decided request ended up, read from the ledger alone.
pub fn final_outcomes(records: &[EvidenceRecord]) -> HashMap<&str, ActualOutcome> {
    let mut out = HashMap::new();
    for r in records {
        match &r.body {
            RecordBody::Decision(d) => {
                let o = if d.decision == DecisionKind::Deny {
                    ActualOutcome::Blocked
                } else {
                    ActualOutcome::Pending
                };
                out.insert(d.request.request_id.as_str(), o);
            }
            RecordBody::EscalationResolution(res) if res.effective == DecisionKind::Deny => {
                let o = if res.status == ResolutionStatus::Expired {
                    ActualOutcome::Expired
                } else {
                    ActualOutcome::Blocked
                };
                out.insert(res.request_id.as_str(), o);
            }
            RecordBody::Outcome(o) => {
                let v = match o.outcome {
                    StepOutcome::Executed => ActualOutcome::Executed,
                    StepOutcome::Failed => ActualOutcome::Failed,
                    StepOutcome::Blocked => ActualOutcome::Blocked,
                    StepOutcome::Pending => ActualOutcome::Pending,
                };
                out.insert(o.request_id.as_str(), v);
            }
            _ => {}
        }
    }
    out
}

/// Loads a scenario file and its policy, then runs it with scripted answers
/// against an in-memory ledger.
pub fn run_scenario_file(
    path: &Path,
) -> Result<SimulationRun, Box<dyn std::error::Error + Send + Sync>> {
    let scenario = Scenario::load(path)?;
    let policy_path = scenario.policy_path(path)?;
    let text = std::fs::read_to_string(&policy_path)?;
    let policy = crate::policy::load_policy(&text)
        .map_err(|r| format!("{} does not validate: {r:?}", policy_path.display()))?;
    Ok(run_scenario(
        &scenario,
        policy,
        Ledger::in_memory(None),
        &mut ScriptedResponder,
    )?)
}
