use std::sync::atomic::Ordering;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::{TimeZone, Utc};
use guardrail_core::clock::ManualClock;
use guardrail_core::engine::Engine;
use guardrail_core::ledger::{Ledger, MemorySink, SwitchableSink};
use guardrail_core::pack;
use guardrail_gateway::{router, AppState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app_with(ledger: Ledger) -> (Router, Arc<ManualClock>) {
    let clock = Arc::new(ManualClock::new(
        Utc.with_ymd_and_hms(2026, 1, 5, 9, 0, 0).unwrap(),
    ));
    let engine = Engine::new(pack::procurement_policy(), ledger, clock.clone(), "test").unwrap();
    (router(AppState::new(Arc::new(engine))), clock)
}

fn app() -> Router {
    app_with(Ledger::in_memory(None)).0
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json");
    let req = req
        .body(body.map_or(Body::empty(), |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (
        status,
        serde_json::from_slice(&bytes).unwrap_or(Value::Null),
    )
}

fn po(id: &str, step: u64, vendor: &str, amount: i64) -> Value {
    json!({
        "request_id": id,
        "principal": { "id": "procurement-bot", "kind": "agent" },
        "action": "create_purchase_order",
        "resource": format!("vendor:{vendor}"),
        "args": { "vendor_id": vendor, "amount": amount },
        "trajectory_id": "run",
        "step_index": step,
    })
}

fn approver(role: &str) -> Value {
    json!({ "approver_identity": "maria.keller", "approver_role": role, "verdict": "approved", "reason": "ok" })
}

#[tokio::test]
async fn decide_and_report_outcome() {
    let app = app();
    let (status, body) = call(&app, "POST", "/v1/decide", Some(po("a", 0, "V-001", 100))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["decision"], "allow");
    assert!(body["evidence_seq"].is_u64());
    let (status, body) = call(
        &app,
        "POST",
        "/v1/outcome",
        Some(json!({ "request_id": "a", "outcome": "executed" })),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["ack"], true);
    let (status, body) = call(
        &app,
        "POST",
        "/v1/outcome",
        Some(json!({ "request_id": "a", "outcome": "executed" })),
    )
    .await;
    assert_eq!(
        (status, body["error"].as_str()),
        (StatusCode::CONFLICT, Some("ALREADY_REPORTED"))
    );
    let (_, traj) = call(&app, "GET", "/v1/trajectories/run", None).await;
    assert_eq!(traj["accumulators"]["total_spend"], "100.0");
}

#[tokio::test]
async fn decide_rejections() {
    let app = app();
    let (status, _) = call(
        &app,
        "POST",
        "/v1/decide",
        Some(json!({ "request_id": "x" })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, "POST", "/v1/decide", Some(po("a", 3, "V-001", 1))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    call(&app, "POST", "/v1/decide", Some(po("a", 0, "V-001", 1))).await;
    let (status, body) = call(&app, "POST", "/v1/decide", Some(po("a", 1, "V-001", 1))).await;
    assert_eq!(
        (status, body["error"].as_str()),
        (StatusCode::CONFLICT, Some("DUPLICATE_REQUEST"))
    );
}

#[tokio::test]
async fn ledger_outage_is_503_with_deny() {
    let (sink, healthy) = SwitchableSink::new(Box::new(MemorySink::default()));
    let (app, _) = app_with(Ledger::with_sink(Box::new(sink), None));
    healthy.store(false, Ordering::SeqCst);
    let (status, body) = call(&app, "POST", "/v1/decide", Some(po("a", 0, "V-001", 100))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["decision"], "deny");
    assert_eq!(body["reason"], "LEDGER_UNAVAILABLE");
}

#[tokio::test]
async fn escalation_endpoints() {
    let app = app();
    let (_, d) = call(
        &app,
        "POST",
        "/v1/decide",
        Some(po("big", 0, "V-001", 9000)),
    )
    .await;
    assert_eq!(d["decision"], "escalate");
    let ticket = d["ticket_id"].as_str().unwrap().to_string();

    let (_, pending) = call(&app, "GET", "/v1/escalations?status=pending", None).await;
    assert_eq!(pending.as_array().unwrap().len(), 1);
    assert_eq!(pending[0]["ticket_id"], ticket.as_str());

    let uri = format!("/v1/escalations/{ticket}/resolve");
    let (status, body) = call(&app, "POST", &uri, Some(approver("intern"))).await;
    assert_eq!(
        (status, body["error"].as_str()),
        (StatusCode::FORBIDDEN, Some("REFUSED_WRONG_ROLE"))
    );
    let (status, body) = call(&app, "POST", &uri, Some(approver("procurement_manager"))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "approved");
    let (status, body) = call(&app, "POST", &uri, Some(approver("procurement_manager"))).await;
    assert_eq!(
        (status, body["error"].as_str()),
        (StatusCode::CONFLICT, Some("ALREADY_RESOLVED"))
    );
    let (status, _) = call(
        &app,
        "POST",
        "/v1/escalations/TKT-nope/resolve",
        Some(approver("x")),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, t) = call(&app, "GET", &format!("/v1/tickets/{ticket}"), None).await;
    assert_eq!(
        (status, &t["approver"]["identity"]),
        (StatusCode::OK, &json!("maria.keller"))
    );
    let (_, pending) = call(&app, "GET", "/v1/escalations?status=pending", None).await;
    assert!(pending.as_array().unwrap().is_empty());
    let (status, _) = call(
        &app,
        "POST",
        "/v1/outcome",
        Some(json!({ "request_id": "big", "outcome": "executed" })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn ledger_read_and_verify() {
    let app = app();
    call(&app, "POST", "/v1/decide", Some(po("a", 0, "V-001", 100))).await;
    call(&app, "POST", "/v1/decide", Some(po("b", 1, "V-999", 100))).await;
    let (_, all) = call(&app, "GET", "/v1/ledger", None).await;
    assert_eq!(all.as_array().unwrap().len(), 3);
    let (_, one) = call(&app, "GET", "/v1/ledger?request_id=b", None).await;
    assert_eq!(one.as_array().unwrap().len(), 1);
    assert_eq!(one[0]["decision"], "deny");
    let (_, tail) = call(&app, "GET", "/v1/ledger?from_seq=2", None).await;
    assert_eq!(tail[0]["seq"], 2);
    let (_, page) = call(&app, "GET", "/v1/ledger?limit=2", None).await;
    assert_eq!(page.as_array().unwrap().len(), 2);
    let (status, v) = call(&app, "GET", "/v1/ledger/verify", None).await;
    assert_eq!((status, &v["clean"]), (StatusCode::OK, &json!(true)));
}

#[tokio::test]
async fn policy_validation() {
    let app = app();
    let req = Request::builder()
        .method("POST")
        .uri("/v1/policies/validate");
    let resp = app
        .clone()
        .oneshot(req.body(Body::from(pack::PROCUREMENT_POLICY)).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let bad = "control \"x\" {\n  actor: *\n  action: *\n  resource: *\n  decision: allow\n}\n";
    let req = Request::builder()
        .method("POST")
        .uri("/v1/policies/validate");
    let resp = app
        .clone()
        .oneshot(req.body(Body::from(bad)).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::UNPROCESSABLE_ENTITY);
    let body: Value =
        serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap();
    assert_eq!(body["valid"], false);
    let (status, _) = call(&app, "POST", "/v1/admin/reload", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
}
