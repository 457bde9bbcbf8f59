//! HTTP gateway for the guardrail engine.
//!
//! Agents call `/v1/decide` before every tool call and `/v1/outcome` after
//! it; approvers work the escalation queue; auditors read and verify the
//! ledger.

mod api;
mod config;

use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use guardrail_core::clock::SystemClock;
use guardrail_core::engine::{Engine, EngineError};
use guardrail_core::ledger::{Ledger, LedgerError};
use guardrail_core::policy::{load_policy, ValidationReport};
use tokio::net::TcpListener;

pub use api::{router, AppState};
pub use config::{ConfigError, GatewayConfig, DEFAULT_PAGE_LIMIT};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot read policy {path}: {source}")]
    PolicyUnreadable {
        path: String,
        source: std::io::Error,
    },
    #[error("policy {path} failed validation ({} problems)", .report.parse_errors.len() + .report.violations.len())]
    InvalidPolicy {
        path: String,
        report: ValidationReport,
    },
    #[error("ledger {path}: {source}")]
    Ledger { path: String, source: LedgerError },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Loads the policy and ledger named by `config` and builds the engine.
/// Refuses to start on an invalid policy or a ledger that cannot be written
/// or does not verify.
pub fn build_state(config: &GatewayConfig) -> Result<AppState, ServeError> {
    let path = config.policy.display().to_string();
    let text =
        std::fs::read_to_string(&config.policy).map_err(|source| ServeError::PolicyUnreadable {
            path: path.clone(),
            source,
        })?;
    let policy = load_policy(&text).map_err(|report| ServeError::InvalidPolicy {
        path: path.clone(),
        report,
    })?;
    let ledger_path = config.ledger_path();
    let ledger = Ledger::open_file(&ledger_path, config.signing_key()).map_err(|source| {
        ServeError::Ledger {
            path: ledger_path.display().to_string(),
            source,
        }
    })?;
    let engine = Engine::new(policy, ledger, Arc::new(SystemClock), &path)?;
    Ok(AppState {
        policy_path: Some(config.policy.clone()),
        page_limit: config.ledger_page_limit,
        ..AppState::new(Arc::new(engine))
    })
}

/// Expires overdue tickets every `interval` until the task is dropped.
pub fn spawn_expiry(engine: Arc<Engine>, interval: Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(interval);
        tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            tick.tick().await;
            for t in engine.expire_tickets() {
                tracing::info!(ticket = %t.ticket_id, effective = ?t.effective, "ticket expired");
            }
        }
    })
}

/// Serves on an already bound listener until `shutdown` resolves, then seals
/// the ledger.
pub async fn serve_on(
    listener: TcpListener,
    state: AppState,
    expiry_interval: Duration,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    let engine = state.engine.clone();
    let expiry = spawn_expiry(engine.clone(), expiry_interval);
    let result = axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await;
    expiry.abort();
    if let Err(e) = engine.seal() {
        tracing::warn!(error = %e, "ledger seal failed");
    }
    result.map_err(ServeError::from)
}

/// Runs the gateway described by `config` until `shutdown` resolves.
pub async fn serve(
    config: GatewayConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    let state = build_state(&config)?;
    let listener = TcpListener::bind(config.listen)
        .await
        .map_err(|source| ServeError::Bind {
            addr: config.listen.to_string(),
            source,
        })?;
    tracing::info!(addr = %listener.local_addr()?, pack_hash = %state.engine.policy().pack_hash(), "gateway listening");
    serve_on(
        listener,
        state,
        Duration::from_secs(config.expiry_interval_seconds),
        shutdown,
    )
    .await
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}
