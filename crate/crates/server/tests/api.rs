use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use autobus_core::orchestrator::{Bundle, Orchestrator};
use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(runs: &Path) -> Router {
    let mut orch = Orchestrator::new(Some(runs));
    let bundle = Bundle::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../case_study")).unwrap();
    orch.add_bundle(bundle);
    autobus_server::router(Arc::new(orch))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn wait_until(app: &Router, uri: &str, done: impl Fn(&Value) -> bool) -> Value {
    for _ in 0..200 {
        let (_, v) = call(app, "GET", uri, None).await;
        if done(&v) {
            return v;
        }
        tokio::time::sleep(Duration::from_millis(25)).await;
    }
    panic!("{uri} never reached the expected state");
}

#[tokio::test]
async fn approval_round_trip_over_http() {
    let runs = tempfile::tempdir().unwrap();
    let app = app(runs.path());

    let (status, list) = call(&app, "GET", "/initiatives", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(list[0]["id"], "i1");
    assert_eq!(list[0]["tasks"][2]["depends_on"], json!(["task1", "task2"]));

    let (status, run) = call(&app, "POST", "/runs", Some(json!({ "initiative_id": "i1" }))).await;
    assert_eq!(status, StatusCode::CREATED);
    let id = run["run_id"].as_str().unwrap().to_string();
    assert_eq!(id, "i1-1");

    let approvals = wait_until(&app, &format!("/runs/{id}/approvals"), |v| v.as_array().is_some_and(|a| !a.is_empty())).await;
    assert_eq!(approvals[0]["task_id"], "task3");
    assert_eq!(approvals[0]["decision"], "pending");
    let aid = approvals[0]["id"].as_str().unwrap().to_string();

    let (_, tasks) = call(&app, "GET", &format!("/runs/{id}/tasks"), None).await;
    let task3 = tasks.as_array().unwrap().iter().find(|t| t["id"] == "task3").unwrap();
    assert_eq!(task3["status"], "awaiting_approval");
    let (status, program) = call(&app, "GET", &format!("/runs/{id}/programs/task3"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(program["program"].as_str().unwrap().contains("% SECTION: actions"));

    let uri = format!("/runs/{id}/approvals/{aid}");
    let (status, err) = call(&app, "POST", &uri, Some(json!({ "decision": "maybe" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"]["code"], "invalid_decision");
    let (status, decided) = call(&app, "POST", &uri, Some(json!({ "decision": "approved", "decider": "ops" }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(decided["decider"], "ops");
    let (status, err) = call(&app, "POST", &uri, Some(json!({ "decision": "rejected" }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error"]["code"], "already_decided");

    let done = wait_until(&app, &format!("/runs/{id}"), |v| v["status"] != "running").await;
    assert_eq!(done["status"], "completed");
    assert_eq!(done["evaluation"]["success"], true);

    let (_, events) = call(&app, "GET", &format!("/runs/{id}/events"), None).await;
    let seqs: Vec<u64> = events.as_array().unwrap().iter().map(|e| e["seq"].as_u64().unwrap()).collect();
    assert_eq!(seqs, (1..=seqs.len() as u64).collect::<Vec<_>>());
    assert_eq!(events.as_array().unwrap().last().unwrap()["kind"], "run_finished");
    let (_, tail) = call(&app, "GET", &format!("/runs/{id}/events?since=3"), None).await;
    assert_eq!(tail[0]["seq"], 4);
    assert_eq!(tail.as_array().unwrap().len(), seqs.len() - 3);
    assert!(runs.path().join("i1-1/events.jsonl").exists());
}

#[tokio::test]
async fn errors_are_json() {
    let runs = tempfile::tempdir().unwrap();
    let app = app(runs.path());
    for uri in ["/runs/nope", "/runs/nope/events", "/runs/nope/tasks", "/runs/nope/approvals", "/nowhere"] {
        let (status, body) = call(&app, "GET", uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(body["error"]["code"], "not_found");
    }
    let (status, body) = call(&app, "POST", "/runs", Some(json!({ "initiative_id": "nope" }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body["error"]["message"].as_str().unwrap().contains("nope"));
    let (status, body) = call(&app, "POST", "/runs", Some(json!({ "wrong": 1 }))).await;
    assert!(status.is_client_error());
    assert_eq!(body["error"]["code"], "bad_request");

    let req = json!({ "initiative_id": "i1", "auto_approve": true, "run_id": "fixed" });
    assert_eq!(call(&app, "POST", "/runs", Some(req.clone())).await.0, StatusCode::CREATED);
    let (status, body) = call(&app, "POST", "/runs", Some(req)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"]["code"], "duplicate_run");
    let done = wait_until(&app, "/runs/fixed", |v| v["status"] != "running").await;
    assert_eq!(done["status"], "completed");
    let (status, _) = call(&app, "GET", "/runs/fixed/programs/task9", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, body) = call(&app, "POST", "/runs/fixed/approvals/a1", Some(json!({ "decision": "rejected" }))).await;
    assert_eq!(status, StatusCode::CONFLICT, "{body}");
    let (_, runs_list) = call(&app, "GET", "/runs", None).await;
    assert_eq!(runs_list.as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn event_stream_pushes_every_event_then_closes() {
    let runs = tempfile::tempdir().unwrap();
    let app = app(runs.path());
    let (_, run) = call(&app, "POST", "/runs", Some(json!({ "initiative_id": "i1", "auto_approve": true }))).await;
    let id = run["run_id"].as_str().unwrap();
    let req = Request::builder().uri(format!("/runs/{id}/events/stream")).body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["content-type"], "text/event-stream");
    let body = tokio::time::timeout(Duration::from_secs(20), to_bytes(resp.into_body(), usize::MAX))
        .await
        .expect("stream closes after run_finished")
        .unwrap();
    let text = String::from_utf8(body.to_vec()).unwrap();
    let data: Vec<Value> = text
        .lines()
        .filter_map(|l| l.strip_prefix("data: "))
        .map(|d| serde_json::from_str(d).unwrap())
        .collect();
    let (_, events) = call(&app, "GET", &format!("/runs/{id}/events"), None).await;
    assert_eq!(Value::Array(data), events);
    assert!(text.contains("event: approval_requested"));

    let last = events.as_array().unwrap().len();
    let req = Request::builder().uri(format!("/runs/{id}/events/stream?since={last}")).body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let body = tokio::time::timeout(Duration::from_secs(5), to_bytes(resp.into_body(), usize::MAX)).await.unwrap().unwrap();
    assert!(!String::from_utf8_lossy(&body).contains("data: "));
}
