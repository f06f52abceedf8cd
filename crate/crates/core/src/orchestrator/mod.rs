mod approval;
mod bundle;
mod event;
mod replay;
mod run;
mod service;
mod store;

pub use approval::{ApprovalError, ApprovalRequest, Decision};
pub use bundle::{check_bundle, check_instruction, Bundle};
pub use event::{parse_event, read_events, Event, EventKind, EventLog};
pub use replay::{replay, StateSummary};
pub use run::{
    digest, run_initiative, start_run, ApprovalPolicy, RunConfig, RunHandle, RunResult, RunStatus, Schedule,
};
pub use service::{Orchestrator, RunRequest};

use crate::report::ValidationReport;
use crate::tools::ToolError;

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error("{0}")]
    Io(String),
    #[error("bundle is invalid: {} error(s)", .0.errors.len())]
    Invalid(ValidationReport),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error("event log has a gap: seq {missing} is missing")]
    Gap { missing: u64 },
    #[error("unknown event kind `{0}`")]
    UnknownKind(String),
    #[error("malformed event at line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("event {seq} moves `{task}` from {from} to {to}")]
    IllegalTransition { seq: u64, task: String, from: String, to: String },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("unknown initiative `{0}`")]
    UnknownInitiative(String),
    #[error("run `{0}` already exists")]
    DuplicateRun(String),
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error("{0}")]
    Io(String),
}
