use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::registry::{ToolHandler, ToolInvocation, ToolResult, ToolStatus};
use super::ToolError;
use crate::logic::parse_clause;

#[derive(Serialize)]
struct Request<'a> {
    tool: &'a str,
    params: String,
    idempotency_key: &'a str,
}

#[derive(Deserialize)]
struct Response {
    status: ToolStatus,
    #[serde(default)]
    facts: Vec<String>,
    #[serde(default)]
    receipt: serde_json::Value,
}

/// Posts invocations as JSON to a remote endpoint.
pub struct HttpHandler {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpHandler {
    pub fn new(endpoint: &str, timeout: Duration) -> Self {
        HttpHandler {
            endpoint: endpoint.to_string(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl ToolHandler for HttpHandler {
    fn call(&self, inv: &ToolInvocation) -> Result<ToolResult, ToolError> {
        let body = Request {
            tool: &inv.tool,
            params: inv.params.to_string(),
            idempotency_key: &inv.idempotency_key,
        };
        let transport = |message: String| ToolError::Transport {
            tool: inv.tool.clone(),
            attempts: 1,
            message,
        };
        let response = match self.agent.post(&self.endpoint).send_json(&body) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) if code >= 500 => {
                return Err(transport(format!("{code} {}", r.status_text())));
            }
            Err(ureq::Error::Status(code, r)) => {
                return Err(ToolError::Failed {
                    tool: inv.tool.clone(),
                    message: format!("{code} {}", r.status_text()),
                });
            }
            Err(e) => return Err(transport(e.to_string())),
        };
        let parsed: Response = response.into_json().map_err(|e| ToolError::Failed {
            tool: inv.tool.clone(),
            message: format!("bad response body: {e}"),
        })?;
        let facts = parsed
            .facts
            .iter()
            .map(|line| {
                parse_clause(line).map_err(|e| ToolError::Failed {
                    tool: inv.tool.clone(),
                    message: format!("bad fact `{line}`: {e}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ToolResult {
            status: parsed.status,
            facts_out: facts,
            receipt: parsed.receipt,
        })
    }
}
