//! The service layer end to end: routing, identity header, error shapes,
//! trace envelopes, and the baseline serving mode.

use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use serde_json::json;
use tower::ServiceExt;

use fieldgate_demo::scenario::find_builder;
use fieldgate_demo::service::{router, AppState, ServeMode};

fn state(scenario: &str, mode: ServeMode, trace: bool) -> Arc<AppState> {
    let scenario = find_builder(scenario).unwrap().build(1).unwrap();
    Arc::new(AppState {
        scenario: Arc::new(scenario),
        mode,
        trace,
    })
}

async fn get(
    state: &Arc<AppState>,
    path: &str,
    user: Option<&str>,
) -> (StatusCode, serde_json::Value) {
    let mut req = Request::builder().uri(path);
    if let Some(u) = user {
        req = req.header("x-user-id", u);
    }
    let resp = router(state.clone())
        .oneshot(req.body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), 1 << 20).await.unwrap();
    let body = serde_json::from_slice(&bytes)
        .unwrap_or_else(|e| panic!("non-JSON body for {path}: {e}"));
    (status, body)
}

#[tokio::test]
async fn health_and_identity_handling() {
    let st = state("intranet-small", ServeMode::Enforced, false);

    let (status, body) = get(&st, "/healthz", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({ "status": "ok" }));

    // Absent header means anonymous, which this endpoint answers with nothing.
    let (status, body) = get(&st, "/ages", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!([]));

    // A malformed id is the caller's error.
    let (status, body) = get(&st, "/ages", Some("abc")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], json!("bad_request"));
    assert!(body["message"].is_string());

    // An id with no directory row falls back to anonymous, so payroll
    // releases nothing.
    let (status, body) = get(&st, "/payroll/average", Some("99")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!(null));

    // Unknown routes answer with the same error shape.
    let (status, body) = get(&st, "/not-a-route", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], json!("not_found"));
}

#[tokio::test]
async fn enforced_responses_over_http() {
    let st = state("intranet-small", ServeMode::Enforced, false);

    let (_, avg) = get(&st, "/payroll/average", Some("2")).await;
    assert_eq!(avg, json!(80.0));

    let (_, ages) = get(&st, "/ages", Some("2")).await;
    assert_eq!(ages, json!([{ "id": 1, "age": 52 }]));

    // Path parameters reach the endpoint percent-decoded.
    let (_, events) = get(&st, "/events/location/Auditorium%20A", Some("3")).await;
    assert_eq!(
        events,
        json!([
            { "eid": 1, "date": "2024-03-01", "location": "Auditorium A", "orgid": 0, "event": "Private event" },
            { "eid": 2, "date": "2024-03-02", "location": "Auditorium A", "orgid": 0, "event": "Private event" },
        ])
    );
}

#[tokio::test]
async fn baseline_mode_matches_enforced_mode() {
    let enforced = state("intranet-small", ServeMode::Enforced, false);
    let baseline = state("intranet-small", ServeMode::Baseline, false);
    for (path, user) in [
        ("/users", Some("1")),
        ("/users", Some("2")),
        ("/addresses", Some("2")),
        ("/payroll/average", Some("2")),
        ("/events", Some("2")),
        ("/events/location/Auditorium%20A", Some("1")),
        ("/invitees", Some("1")),
        ("/ages", None),
    ] {
        let (se, be) = (
            get(&enforced, path, user).await,
            get(&baseline, path, user).await,
        );
        assert_eq!(se, be, "paths disagree on GET {path} as {user:?}");
    }
}

#[tokio::test]
async fn trace_mode_wraps_data_with_decisions() {
    let st = state("intranet-small", ServeMode::Enforced, true);
    let (status, body) = get(&st, "/payroll/average", Some("2")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["data"], json!(80.0));
    let trace = &body["trace"][0];
    assert_eq!(trace["api"], json!("avg_salary"));
    assert_eq!(trace["pre"]["selection"], json!("generic"));
    assert_eq!(
        trace["pre"]["policies"][0]["name"],
        json!("avg_salary_release")
    );
    let sql = trace["sql_executed"].as_str().unwrap();
    assert!(sql.contains("NOT"), "rewritten SQL should exclude managers: {sql}");
}

#[tokio::test]
async fn social_profile_over_http() {
    let st = state("social-small", ServeMode::Enforced, false);
    let (_, body) = get(&st, "/profile/3", Some("1")).await;
    assert_eq!(
        body,
        json!({
            "profile": [{ "id": 3, "name": "Cy" }],
            "posts": ["Follow user to see the posts"],
        })
    );
    let (status, body) = get(&st, "/profile/not-a-number", Some("1")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], json!("bad_request"));
    assert!(body["message"].is_string());
}
