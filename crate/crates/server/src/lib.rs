//! HTTP JSON API over an [`Orchestrator`]: initiatives, runs, events,
//! programs and approvals, plus a server-sent event stream per run.

use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use autobus_core::orchestrator::{ApprovalError, Decision, Event, EventKind, Orchestrator, RunError, RunHandle, RunRequest};
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::Deserialize;
use serde_json::{json, Value};

const POLL: Duration = Duration::from_millis(500);

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn not_found(what: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", what)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

impl From<RunError> for ApiError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::UnknownInitiative(_) => ApiError::not_found(e.to_string()),
            RunError::DuplicateRun(_) => ApiError::new(StatusCode::CONFLICT, "duplicate_run", e.to_string()),
            RunError::Tool(_) | RunError::Io(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "run_failed", e.to_string()),
        }
    }
}

impl From<ApprovalError> for ApiError {
    fn from(e: ApprovalError) -> Self {
        match e {
            ApprovalError::UnknownApproval(_) => ApiError::not_found(e.to_string()),
            ApprovalError::AlreadyDecided { .. } => ApiError::new(StatusCode::CONFLICT, "already_decided", e.to_string()),
            ApprovalError::RunFinished(_) => ApiError::new(StatusCode::CONFLICT, "run_finished", e.to_string()),
            ApprovalError::InvalidDecision => ApiError::new(StatusCode::BAD_REQUEST, "invalid_decision", e.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(e.status(), "bad_request", e.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(orch: Arc<Orchestrator>) -> Router {
    Router::new()
        .route("/initiatives", get(initiatives))
        .route("/runs", get(list_runs).post(start_run))
        .route("/runs/{id}", get(run_summary))
        .route("/runs/{id}/events", get(events))
        .route("/runs/{id}/events/stream", get(event_stream))
        .route("/runs/{id}/tasks", get(tasks))
        .route("/runs/{id}/programs/{task}", get(program))
        .route("/runs/{id}/approvals", get(approvals))
        .route("/runs/{id}/approvals/{aid}", post(decide))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .with_state(orch)
}

/// Serves until the process stops. Binding errors are returned.
pub async fn serve(orch: Arc<Orchestrator>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(orch)).await
}

fn lookup(orch: &Orchestrator, id: &str) -> ApiResult<RunHandle> {
    orch.run(id).ok_or_else(|| ApiError::not_found(format!("no run `{id}`")))
}

async fn initiatives(State(orch): State<Arc<Orchestrator>>) -> Json<Value> {
    let list: Vec<Value> = orch
        .initiatives()
        .map(|b| {
            let deps = b.initiative.dependencies();
            let tasks: Vec<Value> = b
                .initiative
                .tasks
                .iter()
                .map(|t| {
                    json!({
                        "id": t.id,
                        "preconditions": t.preconditions.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
                        "postconditions": t.postconditions.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
                        "allowed_tools": t.allowed_tools,
                        "depends_on": deps.get(&t.id).cloned().unwrap_or_default(),
                        "repeat_until": t.repeat.as_ref().map(|r| json!({ "goal": r.goal.to_string(), "max_iterations": r.max_iterations })),
                    })
                })
                .collect();
            json!({ "id": b.id(), "description": b.spec.description, "tasks": tasks })
        })
        .collect();
    Json(Value::Array(list))
}

fn summary(h: &RunHandle) -> Value {
    let pending = h.approvals().iter().filter(|a| a.decision == Decision::Pending).count();
    let result = h.result();
    json!({
        "run_id": h.run_id(),
        "initiative_id": h.initiative_id(),
        "status": h.status(),
        "tasks": h.statuses(),
        "pending_approvals": pending,
        "events": h.events().len(),
        "evaluation": result.as_ref().and_then(|r| r.summary.evaluation.clone()),
    })
}

async fn list_runs(State(orch): State<Arc<Orchestrator>>) -> Json<Value> {
    Json(Value::Array(orch.runs().iter().map(summary).collect()))
}

async fn start_run(
    State(orch): State<Arc<Orchestrator>>,
    body: Result<Json<RunRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let Json(req) = body?;
    let handle = orch.start(&req)?;
    Ok((StatusCode::CREATED, Json(summary(&handle))))
}

async fn run_summary(State(orch): State<Arc<Orchestrator>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(summary(&lookup(&orch, &id)?)))
}

#[derive(Deserialize)]
struct Since {
    #[serde(default)]
    since: u64,
}

async fn events(
    State(orch): State<Arc<Orchestrator>>,
    Path(id): Path<String>,
    Query(q): Query<Since>,
) -> ApiResult<Json<Vec<Event>>> {
    Ok(Json(lookup(&orch, &id)?.events_since(q.since)))
}

/// Pushes each event as JSON, starting after `since`; closes after
/// `run_finished`.
async fn event_stream(
    State(orch): State<Arc<Orchestrator>>,
    Path(id): Path<String>,
    Query(q): Query<Since>,
) -> ApiResult<Sse<impl Stream<Item = Result<axum::response::sse::Event, Infallible>>>> {
    let handle = lookup(&orch, &id)?;
    let batches = stream::unfold((handle, q.since, false), |(handle, since, done)| async move {
        if done {
            return None;
        }
        let h = handle.clone();
        let batch = tokio::task::spawn_blocking(move || h.wait_events(since, POLL)).await.unwrap_or_default();
        let next = batch.last().map_or(since, |e| e.seq);
        let finished =
            batch.iter().any(|e| e.kind == EventKind::RunFinished) || (batch.is_empty() && handle.result().is_some());
        Some((batch, (handle, next, finished)))
    });
    let events = batches.flat_map(|batch| {
        stream::iter(batch.into_iter().map(|e| {
            let sse = axum::response::sse::Event::default()
                .id(e.seq.to_string())
                .event(e.kind.as_str())
                .json_data(&e)
                .expect("events serialize");
            Ok(sse)
        }))
    });
    Ok(Sse::new(events).keep_alive(KeepAlive::default()))
}

async fn tasks(State(orch): State<Arc<Orchestrator>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let h = lookup(&orch, &id)?;
    let iterations = h.result().map(|r| r.summary.iterations).unwrap_or_default();
    let list: Vec<Value> = h
        .statuses()
        .into_iter()
        .map(|(task, status)| {
            json!({
                "id": task,
                "status": status,
                "iterations": iterations.get(&task).copied().unwrap_or(0),
                "has_program": h.program(&task).is_some(),
            })
        })
        .collect();
    Ok(Json(Value::Array(list)))
}

async fn program(State(orch): State<Arc<Orchestrator>>, Path((id, task)): Path<(String, String)>) -> ApiResult<Json<Value>> {
    let h = lookup(&orch, &id)?;
    let text = h
        .program(&task)
        .ok_or_else(|| ApiError::not_found(format!("no program for task `{task}` in run `{id}`")))?;
    Ok(Json(json!({ "task": task, "program": text })))
}

async fn approvals(State(orch): State<Arc<Orchestrator>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let h = lookup(&orch, &id)?;
    Ok(Json(serde_json::to_value(h.approvals()).expect("approvals serialize")))
}

#[derive(Deserialize)]
struct DecisionBody {
    decision: String,
    #[serde(default)]
    decider: Option<String>,
}

async fn decide(
    State(orch): State<Arc<Orchestrator>>,
    Path((id, aid)): Path<(String, String)>,
    body: Result<Json<DecisionBody>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let Json(body) = body?;
    let h = lookup(&orch, &id)?;
    let decision: Decision = body
        .decision
        .parse()
        .map_err(|e: String| ApiError::new(StatusCode::BAD_REQUEST, "invalid_decision", e))?;
    let decider = body.decider.unwrap_or_else(|| "api".into());
    let req = h.submit_approval(&aid, decision, &decider)?;
    Ok(Json(serde_json::to_value(req).expect("approval serializes")))
}
