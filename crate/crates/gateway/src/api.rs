//! HTTP routes over a shared engine.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use guardrail_core::engine::{DecideError, Engine, OutcomeError, ResolveError};
use guardrail_core::escalation::{EscalationError, TicketStatus, Verdict};
use guardrail_core::ledger::LedgerError;
use guardrail_core::policy::{load_policy, ActionRequest, OwnerRef};
use guardrail_core::trajectory::StepOutcome;
use serde::Deserialize;
use serde_json::{json, Value};

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    /// Policy file re-read by the reload endpoint.
    pub policy_path: Option<PathBuf>,
    /// Most ledger records returned by one read.
    pub page_limit: usize,
}

impl AppState {
    pub fn new(engine: Arc<Engine>) -> Self {
        Self {
            engine,
            policy_path: None,
            page_limit: crate::config::DEFAULT_PAGE_LIMIT,
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    body: Option<Value>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            body: None,
        }
    }

    fn with_body(mut self, body: Value) -> Self {
        self.body = Some(body);
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code, "message": self.message });
        if let Some(extra) = self.body {
            body["detail"] = extra;
        }
        (self.status, Json(body)).into_response()
    }
}

fn ledger_error(e: LedgerError) -> ApiError {
    ApiError::new(
        StatusCode::SERVICE_UNAVAILABLE,
        "LEDGER_UNAVAILABLE",
        e.to_string(),
    )
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "MALFORMED", e.to_string()))
}

type ApiResult = Result<Response, ApiError>;

async fn decide(State(s): State<AppState>, body: Bytes) -> ApiResult {
    let mut value: Value = parse_json(&body)?;
    // callers may omit the timestamp; the gateway stamps arrival time
    if let Some(map) = value.as_object_mut() {
        if !map.contains_key("timestamp") {
            let now = guardrail_core::clock::rfc3339::format(&s.engine.now());
            map.insert("timestamp".into(), Value::String(now));
        }
    }
    let req: ActionRequest = serde_json::from_value(value)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "MALFORMED", e.to_string()))?;
    let result = s.engine.decide(&req).map_err(|e| match e {
        DecideError::Malformed(m) => ApiError::new(StatusCode::BAD_REQUEST, "MALFORMED", m),
        DecideError::Duplicate(_) => {
            ApiError::new(StatusCode::CONFLICT, "DUPLICATE_REQUEST", e.to_string())
        }
        DecideError::OutOfOrder(_) => {
            ApiError::new(StatusCode::BAD_REQUEST, "OUT_OF_ORDER", e.to_string())
        }
    })?;
    let status = if result.ledger_unavailable() {
        StatusCode::SERVICE_UNAVAILABLE
    } else {
        StatusCode::OK
    };
    Ok((status, Json(result)).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OutcomeBody {
    request_id: String,
    outcome: StepOutcome,
    #[serde(default)]
    detail: String,
}

async fn outcome(State(s): State<AppState>, body: Bytes) -> ApiResult {
    let b: OutcomeBody = parse_json(&body)?;
    let ack = s
        .engine
        .report_outcome(&b.request_id, b.outcome, &b.detail)
        .map_err(|e| match e {
            OutcomeError::Refused(r) => {
                let status = if r.code() == "UNKNOWN_REQUEST" {
                    StatusCode::NOT_FOUND
                } else {
                    StatusCode::CONFLICT
                };
                ApiError::new(status, r.code(), r.to_string())
            }
            OutcomeError::InvalidOutcome(_) => {
                ApiError::new(StatusCode::BAD_REQUEST, "INVALID_OUTCOME", e.to_string())
            }
            OutcomeError::Ledger(e) => ledger_error(e),
        })?;
    Ok(Json(json!({ "ack": true, "request_id": ack.request_id, "outcome": ack.outcome, "evidence_seq": ack.evidence_seq }))
        .into_response())
}

#[derive(Deserialize)]
struct EscalationQuery {
    status: Option<TicketStatus>,
}

async fn escalations(State(s): State<AppState>, Query(q): Query<EscalationQuery>) -> Response {
    Json(s.engine.tickets(q.status)).into_response()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ResolveBody {
    approver_identity: String,
    approver_role: String,
    verdict: Verdict,
    #[serde(default)]
    reason: String,
}

async fn resolve(State(s): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let b: ResolveBody = parse_json(&body)?;
    let ticket = s
        .engine
        .resolve(
            &id,
            OwnerRef::new(b.approver_identity, b.approver_role),
            b.verdict,
            &b.reason,
        )
        .map_err(|e| match e {
            ResolveError::Escalation(e) => {
                let status = match e {
                    EscalationError::Unknown(_) => StatusCode::NOT_FOUND,
                    EscalationError::WrongRole { .. } => StatusCode::FORBIDDEN,
                    EscalationError::AlreadyResolved { .. } | EscalationError::Duplicate(_) => {
                        StatusCode::CONFLICT
                    }
                };
                ApiError::new(status, e.code(), e.to_string())
            }
            ResolveError::Ledger(e) => ledger_error(e),
        })?;
    Ok(Json(ticket).into_response())
}

async fn ticket(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let t = s.engine.ticket(&id).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "UNKNOWN_TICKET",
            format!("no ticket `{id}`"),
        )
    })?;
    Ok(Json(t).into_response())
}

async fn trajectory(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let snap = s.engine.trajectory_snapshot(&id).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "UNKNOWN_TRAJECTORY",
            format!("no trajectory `{id}`"),
        )
    })?;
    let accumulators: serde_json::Map<String, Value> = snap
        .into_iter()
        .map(|(k, v)| (k, Value::String(v.to_short_string())))
        .collect();
    Ok(Json(json!({ "trajectory_id": id, "accumulators": accumulators })).into_response())
}

#[derive(Deserialize)]
struct LedgerQuery {
    #[serde(default)]
    from_seq: u64,
    request_id: Option<String>,
    limit: Option<usize>,
}

async fn ledger(State(s): State<AppState>, Query(q): Query<LedgerQuery>) -> Response {
    let records = s.engine.ledger_records(
        q.from_seq,
        q.request_id.as_deref(),
        q.limit.unwrap_or(s.page_limit).min(s.page_limit),
    );
    Json(records).into_response()
}

async fn verify(State(s): State<AppState>) -> Response {
    let report = s.engine.verify_ledger();
    let status = if report.is_clean() {
        StatusCode::OK
    } else {
        StatusCode::CONFLICT
    };
    (
        status,
        Json(json!({ "clean": report.is_clean(), "report": report })),
    )
        .into_response()
}

async fn validate(body: Bytes) -> ApiResult {
    let text = std::str::from_utf8(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "MALFORMED", e.to_string()))?;
    Ok(match load_policy(text) {
        Ok(p) => Json(
            json!({ "valid": true, "pack_hash": p.pack_hash(), "tuples": p.set().tuples.len() }),
        )
        .into_response(),
        Err(report) => (
            StatusCode::UNPROCESSABLE_ENTITY,
            Json(json!({ "valid": false, "report": report })),
        )
            .into_response(),
    })
}

async fn reload(State(s): State<AppState>) -> ApiResult {
    let path = s.policy_path.as_ref().ok_or_else(|| {
        ApiError::new(
            StatusCode::CONFLICT,
            "NO_POLICY_PATH",
            "gateway was not started from a policy file",
        )
    })?;
    let text = std::fs::read_to_string(path).map_err(|e| {
        ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "POLICY_UNREADABLE",
            e.to_string(),
        )
    })?;
    let policy = load_policy(&text).map_err(|report| {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "INVALID_POLICY",
            "policy failed validation; previous pack kept",
        )
        .with_body(serde_json::to_value(report).unwrap_or_default())
    })?;
    let pack_hash = policy.pack_hash().to_string();
    let seq = s
        .engine
        .reload(policy, &path.display().to_string())
        .map_err(ledger_error)?;
    tracing::info!(%pack_hash, seq, "policy reloaded");
    Ok(Json(json!({ "policy_pack_hash": pack_hash, "evidence_seq": seq })).into_response())
}

async fn health(State(s): State<AppState>) -> Response {
    let policy = s.engine.policy();
    Json(json!({
        "pack_hash": policy.pack_hash(),
        "tuples": policy.set().tuples.len(),
        "ledger_records": s.engine.ledger_len(),
    }))
    .into_response()
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/decide", post(decide))
        .route("/v1/outcome", post(outcome))
        .route("/v1/escalations", get(escalations))
        .route("/v1/escalations/{id}/resolve", post(resolve))
        .route("/v1/tickets/{id}", get(ticket))
        .route("/v1/trajectories/{id}", get(trajectory))
        .route("/v1/ledger", get(ledger))
        .route("/v1/ledger/verify", get(verify))
        .route("/v1/policies/validate", post(validate))
        .route("/v1/admin/reload", post(reload))
        .with_state(state)
}
