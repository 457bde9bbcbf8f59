//! Per-run accumulated state behind `trajectory.*` preconditions.
//!
//! Accumulators only ever reflect executed steps. Blocked, pending and
//! failed steps are kept in the step list but never counted.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::decimal::Decimal;
use crate::policy::{
    glob_match, AccumulatorDecl, AccumulatorKind, ActionRequest, DecisionKind, Principal,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOutcome {
    Executed,
    Blocked,
    Pending,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    /// The request as it would execute (after any rewrite).
    pub request: ActionRequest,
    pub decision: DecisionKind,
    pub outcome: StepOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub id: String,
    pub root_principal: Principal,
    pub steps: Vec<Step>,
    accumulators: BTreeMap<String, Decimal>,
    distinct: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TrajectoryError {
    #[error("trajectory id must not be empty")]
    EmptyId,
    #[error("trajectory `{0}` already exists")]
    Duplicate(String),
    #[error("unknown trajectory `{0}`")]
    Unknown(String),
    #[error("request belongs to trajectory `{got}`, not `{expected}`")]
    WrongTrajectory { expected: String, got: String },
    #[error("step index {got} out of order; expected {expected}")]
    OutOfOrder { expected: u64, got: u64 },
    #[error("no step for request `{0}`")]
    UnknownStep(String),
}

/// What a single request adds to one accumulator.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Contribution {
    NotApplicable,
    /// Applicable, but the source field is missing or not numeric.
    Unknown,
    Amount(Decimal),
    Key(String),
}

fn contribution(decl: &AccumulatorDecl, req: &ActionRequest) -> Contribution {
    if !glob_match(&decl.action_pattern, &req.action) {
        return Contribution::NotApplicable;
    }
    match decl.kind {
        AccumulatorKind::Count => Contribution::Amount(Decimal::from_int(1).expect("one fits")),
        AccumulatorKind::Sum => {
            let value = decl
                .field
                .as_ref()
                .and_then(|f| req.args.get(f))
                .and_then(|v| v.as_decimal());
            value.map_or(Contribution::Unknown, Contribution::Amount)
        }
        AccumulatorKind::DistinctCount => match &decl.field {
            None => Contribution::Key(req.resource.clone()),
            Some(f) => match req.args.get(f) {
                Some(v) => Contribution::Key(format!("{}:{}", v.scalar_type(), v)),
                None => Contribution::Unknown,
            },
        },
    }
}

impl Trajectory {
    pub fn new(id: String, root_principal: Principal, decls: &[AccumulatorDecl]) -> Self {
        let mut t = Self {
            id,
            root_principal,
            steps: Vec::new(),
            accumulators: BTreeMap::new(),
            distinct: BTreeMap::new(),
        };
        t.recompute(decls);
        t
    }

    pub fn last_step_index(&self) -> Option<u64> {
        self.steps.last().map(|s| s.request.step_index)
    }

    pub fn next_step_index(&self) -> u64 {
        self.last_step_index().map_or(0, |i| i + 1)
    }

    /// Read-only copy of the accumulator values.
    pub fn snapshot(&self) -> BTreeMap<String, Decimal> {
        self.accumulators.clone()
    }

    pub fn step(&self, request_id: &str) -> Option<&Step> {
        self.steps
            .iter()
            .find(|s| s.request.request_id == request_id)
    }

    fn apply(&mut self, decls: &[AccumulatorDecl], req: &ActionRequest) {
        for decl in decls {
            match contribution(decl, req) {
                Contribution::Amount(d) => {
                    let slot = self.accumulators.entry(decl.name.clone()).or_default();
                    *slot = slot.saturating_add(d);
                }
                Contribution::Key(k) => {
                    let set = self.distinct.entry(decl.name.clone()).or_default();
                    set.insert(k);
                    let count = Decimal::from_int(set.len() as i64).unwrap_or(Decimal::ZERO);
                    self.accumulators.insert(decl.name.clone(), count);
                }
                Contribution::NotApplicable | Contribution::Unknown => {}
            }
        }
    }

    /// Rebuilds accumulator values from the executed steps.
    pub fn recompute(&mut self, decls: &[AccumulatorDecl]) {
        self.accumulators = decls
            .iter()
            .map(|d| (d.name.clone(), Decimal::ZERO))
            .collect();
        self.distinct.clear();
        let executed: Vec<ActionRequest> = self
            .steps
            .iter()
            .filter(|s| s.outcome == StepOutcome::Executed)
            .map(|s| s.request.clone())
            .collect();
        for req in &executed {
            self.apply(decls, req);
        }
    }

    /// Accumulator values as they would be if `req` executed. `None` marks
    /// an accumulator whose value depends on a field `req` does not carry.
    pub fn projected(
        &self,
        decls: &[AccumulatorDecl],
        req: &ActionRequest,
    ) -> BTreeMap<String, Option<Decimal>> {
        decls
            .iter()
            .map(|decl| {
                let current = self
                    .accumulators
                    .get(&decl.name)
                    .copied()
                    .unwrap_or_default();
                let value = match contribution(decl, req) {
                    Contribution::NotApplicable => Some(current),
                    Contribution::Unknown => None,
                    Contribution::Amount(d) => Some(current.saturating_add(d)),
                    Contribution::Key(k) => {
                        let seen = self
                            .distinct
                            .get(&decl.name)
                            .is_some_and(|s| s.contains(&k));
                        let bump = if seen {
                            Decimal::ZERO
                        } else {
                            Decimal::from_int(1).expect("one fits")
                        };
                        Some(current.saturating_add(bump))
                    }
                };
                (decl.name.clone(), value)
            })
            .collect()
    }
}

/// All live trajectories. One trajectory is single-writer; callers
/// serialize steps for the same trajectory id.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryStore {
    decls: Vec<AccumulatorDecl>,
    trajectories: HashMap<String, Trajectory>,
}

impl TrajectoryStore {
    pub fn new(decls: Vec<AccumulatorDecl>) -> Self {
        Self {
            decls,
            trajectories: HashMap::new(),
        }
    }

    pub fn decls(&self) -> &[AccumulatorDecl] {
        &self.decls
    }

    /// Swaps accumulator declarations (policy reload) and recomputes every
    /// trajectory from its executed steps.
    pub fn set_decls(&mut self, decls: Vec<AccumulatorDecl>) {
        self.decls = decls;
        for t in self.trajectories.values_mut() {
            t.recompute(&self.decls);
        }
    }

    pub fn get(&self, id: &str) -> Option<&Trajectory> {
        self.trajectories.get(id)
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn begin_trajectory(
        &mut self,
        id: &str,
        principal: Principal,
    ) -> Result<&Trajectory, TrajectoryError> {
        if id.is_empty() {
            return Err(TrajectoryError::EmptyId);
        }
        if self.trajectories.contains_key(id) {
            return Err(TrajectoryError::Duplicate(id.to_string()));
        }
        let t = Trajectory::new(id.to_string(), principal, &self.decls);
        Ok(self.trajectories.entry(id.to_string()).or_insert(t))
    }

    /// Checks that `req` may be the next step of its trajectory. A request
    /// with step index 0 for an unknown trajectory is acceptable (it will
    /// begin one).
    pub fn check_next(&self, req: &ActionRequest) -> Result<(), TrajectoryError> {
        let expected = self
            .trajectories
            .get(&req.trajectory_id)
            .map_or(0, Trajectory::next_step_index);
        if req.step_index != expected {
            return Err(TrajectoryError::OutOfOrder {
                expected,
                got: req.step_index,
            });
        }
        Ok(())
    }

    pub fn record_step(
        &mut self,
        trajectory_id: &str,
        req: ActionRequest,
        decision: DecisionKind,
        outcome: StepOutcome,
    ) -> Result<&Trajectory, TrajectoryError> {
        let t = self
            .trajectories
            .get_mut(trajectory_id)
            .ok_or_else(|| TrajectoryError::Unknown(trajectory_id.to_string()))?;
        if req.trajectory_id != t.id {
            return Err(TrajectoryError::WrongTrajectory {
                expected: t.id.clone(),
                got: req.trajectory_id,
            });
        }
        let expected = t.next_step_index();
        if req.step_index != expected {
            return Err(TrajectoryError::OutOfOrder {
                expected,
                got: req.step_index,
            });
        }
        if outcome == StepOutcome::Executed {
            t.apply(&self.decls, &req);
        }
        t.steps.push(Step {
            request: req,
            decision,
            outcome,
        });
        Ok(t)
    }

    /// Resolves a recorded step's outcome. Accumulators change only when a
    /// step becomes executed.
    pub fn set_outcome(
        &mut self,
        trajectory_id: &str,
        request_id: &str,
        outcome: StepOutcome,
    ) -> Result<&Trajectory, TrajectoryError> {
        let t = self
            .trajectories
            .get_mut(trajectory_id)
            .ok_or_else(|| TrajectoryError::Unknown(trajectory_id.to_string()))?;
        let step = t
            .steps
            .iter_mut()
            .find(|s| s.request.request_id == request_id)
            .ok_or_else(|| TrajectoryError::UnknownStep(request_id.to_string()))?;
        let was_executed = step.outcome == StepOutcome::Executed;
        step.outcome = outcome;
        let req = step.request.clone();
        if outcome == StepOutcome::Executed && !was_executed {
            t.apply(&self.decls, &req);
        } else if was_executed && outcome != StepOutcome::Executed {
            t.recompute(&self.decls);
        }
        Ok(t)
    }

    pub fn snapshot(&self, id: &str) -> Result<BTreeMap<String, Decimal>, TrajectoryError> {
        self.get(id)
            .map(Trajectory::snapshot)
            .ok_or_else(|| TrajectoryError::Unknown(id.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PrincipalKind;
    use crate::value::Scalar;
    use chrono::{TimeZone, Utc};

    fn decls() -> Vec<AccumulatorDecl> {
        vec![
            AccumulatorDecl {
                name: "total_spend".into(),
                kind: AccumulatorKind::Sum,
                action_pattern: "create_purchase_order".into(),
                field: Some("amount".into()),
            },
            AccumulatorDecl {
                name: "vendors".into(),
                kind: AccumulatorKind::DistinctCount,
                action_pattern: "create_*".into(),
                field: Some("vendor_id".into()),
            },
            AccumulatorDecl {
                name: "calls".into(),
                kind: AccumulatorKind::Count,
                action_pattern: "*".into(),
                field: None,
            },
        ]
    }

    fn agent() -> Principal {
        Principal::new("procurement-bot", PrincipalKind::Agent)
    }

    fn po(step: u64, vendor: &str, amount: i64) -> ActionRequest {
        ActionRequest {
            request_id: format!("r{step}"),
            principal: agent(),
            action: "create_purchase_order".into(),
            resource: format!("vendor:{vendor}"),
            args: [
                ("vendor_id".to_string(), Scalar::Str(vendor.into())),
                ("amount".to_string(), Scalar::Int(amount)),
            ]
            .into_iter()
            .collect(),
            trajectory_id: "T1".into(),
            step_index: step,
            timestamp: Utc.with_ymd_and_hms(2026, 1, 5, 9, 0, 0).unwrap(),
        }
    }

    fn dec(units: i64) -> Decimal {
        Decimal::from_int(units).unwrap()
    }

    /// Independent fold over executed steps.
    fn brute_force_spend(steps: &[(i64, StepOutcome)]) -> Decimal {
        dec(steps
            .iter()
            .filter(|(_, o)| *o == StepOutcome::Executed)
            .map(|(a, _)| a)
            .sum())
    }

    #[test]
    fn begin_zeroes_accumulators() {
        let mut store = TrajectoryStore::new(decls());
        let t = store.begin_trajectory("T1", agent()).unwrap();
        assert_eq!(t.snapshot()["total_spend"], Decimal::ZERO);
        assert!(t.snapshot().values().all(|v| *v == Decimal::ZERO));
        assert_eq!(
            store.begin_trajectory("T1", agent()).unwrap_err(),
            TrajectoryError::Duplicate("T1".into())
        );
        assert_eq!(
            store.begin_trajectory("", agent()).unwrap_err(),
            TrajectoryError::EmptyId
        );
    }

    #[test]
    fn executed_steps_accumulate() {
        let script = [(3000, StepOutcome::Executed), (2500, StepOutcome::Executed)];
        let mut store = TrajectoryStore::new(decls());
        store.begin_trajectory("T1", agent()).unwrap();
        for (i, (amount, outcome)) in script.iter().enumerate() {
            store
                .record_step(
                    "T1",
                    po(i as u64, "V-001", *amount),
                    DecisionKind::Allow,
                    *outcome,
                )
                .unwrap();
        }
        let snap = store.snapshot("T1").unwrap();
        assert_eq!(snap["total_spend"], brute_force_spend(&script));
        assert_eq!(snap["total_spend"], dec(5500));
        assert_eq!(snap["vendors"], dec(1));
        assert_eq!(snap["calls"], dec(2));
        assert_eq!(store.snapshot("T1").unwrap(), snap);
    }

    #[test]
    fn blocked_steps_are_excluded() {
        let mut store = TrajectoryStore::new(decls());
        store.begin_trajectory("T1", agent()).unwrap();
        store
            .record_step(
                "T1",
                po(0, "V-001", 3000),
                DecisionKind::Allow,
                StepOutcome::Executed,
            )
            .unwrap();
        store
            .record_step(
                "T1",
                po(1, "V-009", 4000),
                DecisionKind::Deny,
                StepOutcome::Blocked,
            )
            .unwrap();
        store
            .record_step(
                "T1",
                po(2, "V-007", 9000),
                DecisionKind::Escalate,
                StepOutcome::Pending,
            )
            .unwrap();
        let snap = store.snapshot("T1").unwrap();
        assert_eq!(snap["total_spend"], dec(3000));
        assert_eq!(snap["vendors"], dec(1));
        // pending step executes once approved
        store
            .set_outcome("T1", "r2", StepOutcome::Executed)
            .unwrap();
        assert_eq!(store.snapshot("T1").unwrap()["total_spend"], dec(12000));
    }

    #[test]
    fn step_order_is_enforced() {
        let mut store = TrajectoryStore::new(decls());
        store.begin_trajectory("T1", agent()).unwrap();
        store
            .record_step(
                "T1",
                po(0, "V-001", 1),
                DecisionKind::Allow,
                StepOutcome::Executed,
            )
            .unwrap();
        let err = store
            .record_step(
                "T1",
                po(2, "V-001", 1),
                DecisionKind::Allow,
                StepOutcome::Executed,
            )
            .unwrap_err();
        assert_eq!(
            err,
            TrajectoryError::OutOfOrder {
                expected: 1,
                got: 2
            }
        );
        let err = store
            .record_step(
                "T9",
                po(1, "V-001", 1),
                DecisionKind::Allow,
                StepOutcome::Executed,
            )
            .unwrap_err();
        assert_eq!(err, TrajectoryError::Unknown("T9".into()));
    }

    #[test]
    fn projection_includes_the_pending_request() {
        let mut store = TrajectoryStore::new(decls());
        store.begin_trajectory("T1", agent()).unwrap();
        store
            .record_step(
                "T1",
                po(0, "V-001", 2000),
                DecisionKind::Allow,
                StepOutcome::Executed,
            )
            .unwrap();
        let t = store.get("T1").unwrap();
        let p = t.projected(store.decls(), &po(1, "V-001", 2000));
        assert_eq!(p["total_spend"], Some(dec(4000)));
        assert_eq!(p["vendors"], Some(dec(1)));
        let p = t.projected(store.decls(), &po(1, "V-002", 2000));
        assert_eq!(p["vendors"], Some(dec(2)));
        let mut missing = po(1, "V-001", 0);
        missing.args.remove("amount");
        assert_eq!(t.projected(store.decls(), &missing)["total_spend"], None);
        // projection never mutates
        assert_eq!(t.snapshot()["total_spend"], dec(2000));
    }

    #[test]
    fn reload_recomputes_from_executed_steps() {
        let mut store = TrajectoryStore::new(vec![]);
        store.begin_trajectory("T1", agent()).unwrap();
        store
            .record_step(
                "T1",
                po(0, "V-001", 700),
                DecisionKind::Allow,
                StepOutcome::Executed,
            )
            .unwrap();
        store
            .record_step(
                "T1",
                po(1, "V-001", 900),
                DecisionKind::Deny,
                StepOutcome::Blocked,
            )
            .unwrap();
        store.set_decls(decls());
        assert_eq!(store.snapshot("T1").unwrap()["total_spend"], dec(700));
    }
}
