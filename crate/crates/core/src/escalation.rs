//! Human approval tickets for escalated requests.

use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

use crate::ledger::ResolutionStatus;
use crate::policy::{ActionRequest, DecisionKind, EscalateParams, OwnerRef, TimeoutAction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TicketStatus {
    Pending,
    Approved,
    Denied,
    Expired,
}

impl From<ResolutionStatus> for TicketStatus {
    fn from(s: ResolutionStatus) -> Self {
        match s {
            ResolutionStatus::Approved => TicketStatus::Approved,
            ResolutionStatus::Denied => TicketStatus::Denied,
            ResolutionStatus::Expired => TicketStatus::Expired,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Approved,
    Denied,
}

impl Verdict {
    pub fn status(self) -> ResolutionStatus {
        match self {
            Verdict::Approved => ResolutionStatus::Approved,
            Verdict::Denied => ResolutionStatus::Denied,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscalationTicket {
    pub ticket_id: String,
    /// The held request (after any rewrite), including requester identity.
    pub request: ActionRequest,
    pub tuple_id: String,
    pub approver_role: String,
    pub status: TicketStatus,
    #[serde(with = "crate::clock::rfc3339")]
    pub opened_at: DateTime<Utc>,
    #[serde(with = "crate::clock::rfc3339")]
    pub expires_at: DateTime<Utc>,
    pub on_timeout: TimeoutAction,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_time")]
    pub resolved_at: Option<DateTime<Utc>>,
    pub approver: Option<OwnerRef>,
    pub reason: String,
    /// allow or deny once resolved.
    pub effective: Option<DecisionKind>,
    pub auto_allow: bool,
}

mod opt_time {
    use chrono::{DateTime, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(at: &Option<DateTime<Utc>>, s: S) -> Result<S::Ok, S::Error> {
        match at {
            Some(t) => s.serialize_some(&crate::clock::rfc3339::format(t)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DateTime<Utc>>, D::Error> {
        let text = Option::<String>::deserialize(d)?;
        text.map(|t| {
            DateTime::parse_from_rfc3339(&t)
                .map(|t| t.with_timezone(&Utc))
                .map_err(serde::de::Error::custom)
        })
        .transpose()
    }
}

pub fn ticket_id_for(request_id: &str) -> String {
    format!("TKT-{request_id}")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EscalationError {
    #[error("a ticket already exists for request `{0}`")]
    Duplicate(String),
    #[error("unknown ticket `{0}`")]
    Unknown(String),
    #[error("ticket `{ticket_id}` is already {status:?}")]
    AlreadyResolved {
        ticket_id: String,
        status: TicketStatus,
    },
    #[error("approver role `{got}` cannot resolve a ticket requiring `{required}`")]
    WrongRole { required: String, got: String },
}

impl EscalationError {
    pub fn code(&self) -> &'static str {
        match self {
            EscalationError::Duplicate(_) => "DUPLICATE_TICKET",
            EscalationError::Unknown(_) => "UNKNOWN_TICKET",
            EscalationError::AlreadyResolved { .. } => "ALREADY_RESOLVED",
            EscalationError::WrongRole { .. } => "REFUSED_WRONG_ROLE",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TicketStore {
    tickets: BTreeMap<String, EscalationTicket>,
    by_request: HashMap<String, String>,
}

impl TicketStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, ticket_id: &str) -> Option<&EscalationTicket> {
        self.tickets.get(ticket_id)
    }

    pub fn for_request(&self, request_id: &str) -> Option<&EscalationTicket> {
        self.by_request
            .get(request_id)
            .and_then(|id| self.tickets.get(id))
    }

    pub fn all(&self) -> impl Iterator<Item = &EscalationTicket> {
        self.tickets.values()
    }

    pub fn with_status(&self, status: TicketStatus) -> Vec<&EscalationTicket> {
        self.tickets
            .values()
            .filter(|t| t.status == status)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.tickets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tickets.is_empty()
    }

    pub fn open(
        &mut self,
        request: &ActionRequest,
        tuple_id: &str,
        params: &EscalateParams,
        opened_at: DateTime<Utc>,
    ) -> Result<&EscalationTicket, EscalationError> {
        if self.by_request.contains_key(&request.request_id) {
            return Err(EscalationError::Duplicate(request.request_id.clone()));
        }
        let ticket_id = ticket_id_for(&request.request_id);
        let timeout = TimeDelta::seconds(
            i64::try_from(params.timeout_seconds).unwrap_or(i64::MAX / 1_000_000),
        );
        let ticket = EscalationTicket {
            ticket_id: ticket_id.clone(),
            request: request.clone(),
            tuple_id: tuple_id.to_string(),
            approver_role: params.approver_role.clone(),
            status: TicketStatus::Pending,
            opened_at,
            expires_at: opened_at
                .checked_add_signed(timeout)
                .unwrap_or(DateTime::<Utc>::MAX_UTC),
            on_timeout: params.on_timeout,
            resolved_at: None,
            approver: None,
            reason: String::new(),
            effective: None,
            auto_allow: false,
        };
        self.by_request
            .insert(request.request_id.clone(), ticket_id.clone());
        Ok(self.tickets.entry(ticket_id).or_insert(ticket))
    }

    /// Checks a human resolution without applying it.
    pub fn check_resolve(
        &self,
        ticket_id: &str,
        approver: &OwnerRef,
    ) -> Result<&EscalationTicket, EscalationError> {
        let t = self
            .tickets
            .get(ticket_id)
            .ok_or_else(|| EscalationError::Unknown(ticket_id.to_string()))?;
        if t.status != TicketStatus::Pending {
            return Err(EscalationError::AlreadyResolved {
                ticket_id: ticket_id.to_string(),
                status: t.status,
            });
        }
        if approver.role != t.approver_role {
            return Err(EscalationError::WrongRole {
                required: t.approver_role.clone(),
                got: approver.role.clone(),
            });
        }
        Ok(t)
    }

    /// Moves a pending ticket to a terminal status. Also used when
    /// rebuilding state from the ledger.
    pub fn apply(
        &mut self,
        ticket_id: &str,
        status: ResolutionStatus,
        approver: Option<OwnerRef>,
        reason: &str,
        at: DateTime<Utc>,
    ) -> Result<&EscalationTicket, EscalationError> {
        let t = self
            .tickets
            .get_mut(ticket_id)
            .ok_or_else(|| EscalationError::Unknown(ticket_id.to_string()))?;
        if t.status != TicketStatus::Pending {
            return Err(EscalationError::AlreadyResolved {
                ticket_id: ticket_id.to_string(),
                status: t.status,
            });
        }
        let (effective, auto_allow) = resolution_effect(status, t.on_timeout);
        t.status = status.into();
        t.resolved_at = Some(at);
        t.approver = match status {
            ResolutionStatus::Expired => None,
            _ => approver,
        };
        t.reason = reason.to_string();
        t.effective = Some(effective);
        t.auto_allow = auto_allow;
        Ok(t)
    }

    pub fn resolve(
        &mut self,
        ticket_id: &str,
        approver: OwnerRef,
        verdict: Verdict,
        reason: &str,
        at: DateTime<Utc>,
    ) -> Result<&EscalationTicket, EscalationError> {
        self.check_resolve(ticket_id, &approver)?;
        self.apply(ticket_id, verdict.status(), Some(approver), reason, at)
    }

    /// Pending tickets whose expiry lies strictly before `now`, by ticket id.
    pub fn due(&self, now: DateTime<Utc>) -> Vec<String> {
        self.tickets
            .values()
            .filter(|t| t.status == TicketStatus::Pending && now > t.expires_at)
            .map(|t| t.ticket_id.clone())
            .collect()
    }

    /// Expires every overdue ticket and returns them.
    pub fn expire_tickets(&mut self, now: DateTime<Utc>) -> Vec<EscalationTicket> {
        let due = self.due(now);
        due.iter()
            .filter_map(|id| {
                self.apply(id, ResolutionStatus::Expired, None, "timeout", now)
                    .ok()
                    .cloned()
            })
            .collect()
    }
}

/// The decision a held action ends up with, and whether that was an
/// automatic allow on timeout.
pub fn resolution_effect(
    status: ResolutionStatus,
    on_timeout: TimeoutAction,
) -> (DecisionKind, bool) {
    match (status, on_timeout) {
        (ResolutionStatus::Approved, _) => (DecisionKind::Allow, false),
        (ResolutionStatus::Denied, _) => (DecisionKind::Deny, false),
        (ResolutionStatus::Expired, TimeoutAction::Deny) => (DecisionKind::Deny, false),
        (ResolutionStatus::Expired, TimeoutAction::Allow) => (DecisionKind::Allow, true),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{Principal, PrincipalKind};
    use crate::value::Scalar;
    use chrono::TimeZone;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2026, 1, 5, 9, 0, 0).unwrap()
    }

    fn request(id: &str) -> ActionRequest {
        ActionRequest {
            request_id: id.into(),
            principal: Principal::new("procurement-bot", PrincipalKind::Agent),
            action: "create_purchase_order".into(),
            resource: "vendor:V-001".into(),
            args: [("amount".to_string(), Scalar::Int(5001))]
                .into_iter()
                .collect(),
            trajectory_id: "run-1".into(),
            step_index: 0,
            timestamp: t0(),
        }
    }

    fn params(on_timeout: TimeoutAction) -> EscalateParams {
        EscalateParams {
            approver_role: "procurement_manager".into(),
            timeout_seconds: 86_400,
            on_timeout,
        }
    }

    fn manager() -> OwnerRef {
        OwnerRef::new("maria.keller", "procurement_manager")
    }

    #[test]
    fn open_carries_requester_and_role() {
        let mut store = TicketStore::new();
        let t = store
            .open(
                &request("r1"),
                "po-threshold",
                &params(TimeoutAction::Deny),
                t0(),
            )
            .unwrap();
        assert_eq!(t.status, TicketStatus::Pending);
        assert_eq!(t.approver_role, "procurement_manager");
        assert_eq!(t.request.principal.id, "procurement-bot");
        assert_eq!(t.opened_at, t0());
        assert_eq!(t.ticket_id, "TKT-r1");
        let err = store
            .open(
                &request("r1"),
                "po-threshold",
                &params(TimeoutAction::Deny),
                t0(),
            )
            .unwrap_err();
        assert_eq!(err, EscalationError::Duplicate("r1".into()));
    }

    #[test]
    fn resolution_rules() {
        let mut store = TicketStore::new();
        store
            .open(
                &request("r1"),
                "po-threshold",
                &params(TimeoutAction::Deny),
                t0(),
            )
            .unwrap();
        let err = store
            .resolve(
                "TKT-r1",
                OwnerRef::new("sam", "intern"),
                Verdict::Approved,
                "",
                t0(),
            )
            .unwrap_err();
        assert_eq!(err.code(), "REFUSED_WRONG_ROLE");
        let t = store
            .resolve("TKT-r1", manager(), Verdict::Approved, "ok", t0())
            .unwrap();
        assert_eq!(
            (t.status, t.effective),
            (TicketStatus::Approved, Some(DecisionKind::Allow))
        );
        assert_eq!(t.approver.as_ref().unwrap().identity, "maria.keller");
        assert!(t.resolved_at.is_some());
        let err = store
            .resolve("TKT-r1", manager(), Verdict::Denied, "", t0())
            .unwrap_err();
        assert_eq!(err.code(), "ALREADY_RESOLVED");
        assert_eq!(
            store
                .resolve("TKT-x", manager(), Verdict::Denied, "", t0())
                .unwrap_err()
                .code(),
            "UNKNOWN_TICKET"
        );
    }

    #[test]
    fn expiry() {
        let mut store = TicketStore::new();
        store
            .open(
                &request("r1"),
                "po-threshold",
                &params(TimeoutAction::Deny),
                t0(),
            )
            .unwrap();
        store
            .open(
                &request("r2"),
                "po-threshold",
                &params(TimeoutAction::Allow),
                t0(),
            )
            .unwrap();
        assert!(store
            .expire_tickets(t0() + TimeDelta::seconds(86_400))
            .is_empty());
        let expired = store.expire_tickets(t0() + TimeDelta::seconds(86_401));
        assert_eq!(expired.len(), 2);
        assert_eq!(
            (expired[0].effective, expired[0].auto_allow),
            (Some(DecisionKind::Deny), false)
        );
        assert_eq!(
            (expired[1].effective, expired[1].auto_allow),
            (Some(DecisionKind::Allow), true)
        );
        assert!(expired
            .iter()
            .all(|t| t.approver.is_none() && t.status == TicketStatus::Expired));
        assert!(store.expire_tickets(t0() + TimeDelta::days(9)).is_empty());
    }
}
