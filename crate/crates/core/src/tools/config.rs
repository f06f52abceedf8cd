use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::builtin::{FixtureHandler, PersistHandler, RecorderHandler};
use super::descriptor::{ToolDescriptor, Transport};
use super::http::HttpHandler;
use super::registry::{ToolHandler, ToolRegistry};
use super::ToolError;
use crate::semantics::Table;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HandlerSpec {
    Persist,
    Recorder,
    /// Table file (JSON or CSV) relative to the bundle; `columns` in argument order.
    Fixture { path: String, columns: Vec<String> },
    /// Uses the descriptor's endpoint.
    Http {
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

fn default_timeout_ms() -> u64 {
    5000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolConfig {
    #[serde(flatten)]
    pub descriptor: ToolDescriptor,
    pub handler: HandlerSpec,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ToolsFile {
    pub tools: Vec<ToolConfig>,
}

impl ToolsFile {
    pub fn load(path: &Path) -> Result<Self, ToolError> {
        let text = std::fs::read_to_string(path).map_err(|e| ToolError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ToolError::Config(format!("{}: {e}", path.display())))
    }
}

/// Reads a fixture table from `dir`, picking the parser by extension.
pub fn read_fixture(dir: &Path, rel: &str) -> Result<Table, ToolError> {
    let path = dir.join(rel);
    let err = |e: String| ToolError::Config(format!("{}: {e}", path.display()));
    if rel.ends_with(".json") {
        let text = std::fs::read_to_string(&path).map_err(|e| err(e.to_string()))?;
        Table::from_json(&text).map_err(|e| err(e.to_string()))
    } else {
        Table::from_csv_path(&path).map_err(|e| err(e.to_string()))
    }
}

/// Builds a registry. `fixture` resolves a fixture path to its table, so
/// callers can serve generated tables without touching disk.
pub fn build_registry(
    entries: &[ToolConfig],
    fixture: &dyn Fn(&str) -> Result<Table, ToolError>,
) -> Result<ToolRegistry, ToolError> {
    let mut registry = ToolRegistry::new();
    for entry in entries {
        let d = &entry.descriptor;
        let handler: Arc<dyn ToolHandler> = match &entry.handler {
            HandlerSpec::Persist => Arc::new(PersistHandler::new()),
            HandlerSpec::Recorder => Arc::new(RecorderHandler::new()),
            HandlerSpec::Fixture { path, columns } => {
                let sig = d
                    .produces()
                    .ok_or_else(|| ToolError::Config(format!("fixture tool `{}` must be a grounding tool", d.name)))?;
                if columns.len() != sig.arity {
                    return Err(ToolError::Config(format!("fixture tool `{}` needs {} columns", d.name, sig.arity)));
                }
                Arc::new(FixtureHandler::from_table(&sig.name, d.input_count(), &fixture(path)?, columns)?)
            }
            HandlerSpec::Http { timeout_ms } => {
                let endpoint = match (d.transport, &d.endpoint) {
                    (Transport::Http, Some(e)) => e,
                    _ => return Err(ToolError::Config(format!("http tool `{}` needs transport http and an endpoint", d.name))),
                };
                Arc::new(HttpHandler::new(endpoint, Duration::from_millis(*timeout_ms)))
            }
        };
        registry.register_tool(d.clone(), handler)?;
    }
    Ok(registry)
}
