//! Tool registry and dispatch for `invoke(Action, Params)` and groundings.

mod builtin;
mod config;
mod descriptor;
mod http;
mod registry;

pub use builtin::{cell_term, recipients, FixtureHandler, PersistHandler, RecorderHandler};
pub use config::{build_registry, read_fixture, HandlerSpec, ToolConfig, ToolsFile};
pub use descriptor::{Catalog, Impact, ToolDescriptor, ToolKind, Transport};
pub use http::HttpHandler;
pub use registry::{
    idempotency_key, RetryPolicy, ToolHandler, ToolInvocation, ToolRegistry, ToolResult, ToolStatus,
};

use crate::logic::PredicateKey;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ToolError {
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error("tool `{0}` is already registered")]
    DuplicateTool(String),
    #[error("`{tool}` called with non-ground params `{params}`")]
    NonGroundParams { tool: String, params: String },
    #[error("`{tool}` transport failed after {attempts} attempt(s): {message}")]
    Transport { tool: String, attempts: u32, message: String },
    #[error("`{tool}` produced `{got}`, which does not match {expected}")]
    SignatureMismatch { tool: String, got: String, expected: PredicateKey },
    #[error("`{tool}` failed: {message}")]
    Failed { tool: String, message: String },
    #[error("no registered tool produces {0}")]
    NoProducer(PredicateKey),
    #[error("tool config: {0}")]
    Config(String),
}

impl ToolError {
    pub fn code(&self) -> &'static str {
        match self {
            ToolError::UnknownTool(_) => "E_UNKNOWN_TOOL",
            ToolError::DuplicateTool(_) => "E_DUPLICATE_TOOL",
            ToolError::NonGroundParams { .. } => "E_NONGROUND_PARAMS",
            ToolError::Transport { .. } => "E_TRANSPORT",
            ToolError::SignatureMismatch { .. } => "E_SIGNATURE",
            ToolError::Failed { .. } => "E_TOOL_FAILED",
            ToolError::NoProducer(_) => "E_NO_PRODUCER",
            ToolError::Config(_) => "E_TOOL_CONFIG",
        }
    }

    pub fn is_retryable(&self) -> bool {
        matches!(self, ToolError::Transport { .. })
    }
}

#[cfg(test)]
mod tests;
