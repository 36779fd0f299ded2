//! HTTP front for a scenario.
//!
//! Identity is a demo-grade `x-user-id` header: absent means anonymous, a
//! non-integer is a 400. The same router can serve the enforced or the
//! inline-check implementation, which is what the bench harness compares.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::Path;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use fieldgate_core::policy::RequestContext;

use crate::endpoint::{Endpoint, EndpointError, Params};
use crate::scenario::{user_context, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServeMode {
    Enforced,
    Baseline,
}

pub struct AppState {
    pub scenario: Arc<Scenario>,
    pub mode: ServeMode,
    /// Wrap responses as `{"data", "trace"}` with the enforcement trace.
    pub trace: bool,
}

pub fn router(state: Arc<AppState>) -> Router {
    let mut router = Router::new().route("/healthz", get(healthz));
    for ep in &state.scenario.endpoints {
        let ep = ep.clone();
        let state = state.clone();
        router = router.route(
            ep.route(),
            get(move |headers: HeaderMap, Path(path): Path<HashMap<String, String>>| {
                let ep = ep.clone();
                let state = state.clone();
                async move { handle(state, ep, headers, path) }
            }),
        );
    }
    router.fallback(|| async {
        error_response(StatusCode::NOT_FOUND, "not_found", "no such route")
    })
}

/// Bind and serve in a background task; returns the bound address (useful
/// with port 0) and the server's join handle.
pub async fn spawn(
    state: Arc<AppState>,
    addr: SocketAddr,
) -> std::io::Result<(SocketAddr, JoinHandle<()>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let app = router(state);
    let handle = tokio::spawn(async move {
        let _ = axum::serve(listener, app).await;
    });
    Ok((local, handle))
}

/// Serve until ctrl-c.
pub async fn run(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = TcpListener::bind(addr).await?;
    let app = router(state);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

fn handle(
    state: Arc<AppState>,
    ep: Arc<dyn Endpoint>,
    headers: HeaderMap,
    path: HashMap<String, String>,
) -> Response {
    let params: Params = path.into_iter().collect();
    let user_id = match parse_user_header(&headers) {
        Ok(id) => id,
        Err(msg) => return error_response(StatusCode::BAD_REQUEST, "bad_request", &msg),
    };
    let user = match user_context(&state.scenario.db, user_id) {
        Ok(u) => u,
        Err(e) => {
            return error_response(StatusCode::INTERNAL_SERVER_ERROR, "internal", &e.to_string())
        }
    };
    let result = match state.mode {
        ServeMode::Baseline => ep.baseline(&state.scenario.db, &user, &params),
        ServeMode::Enforced => {
            let ctx = RequestContext::new(user, ep.api());
            if state.trace {
                traced(&state.scenario, ep.as_ref(), &ctx, &params)
            } else {
                ep.enforced(&state.scenario.engine, &ctx, &params)
            }
        }
    };
    match result {
        Ok(json) => (StatusCode::OK, Json(json)).into_response(),
        Err(EndpointError::BadRequest(msg)) => {
            error_response(StatusCode::BAD_REQUEST, "bad_request", &msg)
        }
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, "internal", &e.to_string()),
    }
}

fn traced(
    scenario: &Scenario,
    ep: &dyn Endpoint,
    ctx: &RequestContext,
    params: &Params,
) -> Result<serde_json::Value, EndpointError> {
    let plan = ep.plan(params)?;
    let single = plan.len() == 1;
    let mut parts = Vec::new();
    let mut traces = Vec::new();
    for (name, query) in plan {
        let (rs, trace) = scenario.engine.enforce_traced(&query, ctx)?;
        parts.push((name, rs.to_json()));
        traces.push(serde_json::to_value(&trace).unwrap_or(serde_json::Value::Null));
    }
    let data = if single {
        parts.pop().expect("single part").1
    } else {
        let mut obj = serde_json::Map::new();
        for (name, value) in parts {
            obj.insert(name.to_string(), value);
        }
        serde_json::Value::Object(obj)
    };
    Ok(serde_json::json!({ "data": data, "trace": traces }))
}

fn parse_user_header(headers: &HeaderMap) -> Result<Option<i64>, String> {
    let Some(raw) = headers.get("x-user-id") else {
        return Ok(None);
    };
    raw.to_str()
        .ok()
        .and_then(|s| s.parse::<i64>().ok())
        .map(Some)
        .ok_or_else(|| "x-user-id must be an integer".to_string())
}

fn error_response(status: StatusCode, code: &str, msg: &str) -> Response {
    (status, Json(serde_json::json!({ "code": code, "message": msg }))).into_response()
}
