use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::descriptor::{Catalog, ToolDescriptor, ToolKind};
use super::ToolError;
use crate::logic::{Clause, PredicateKey, Term};

/// Hex SHA-256 of run, task, tool and canonical params text.
pub fn idempotency_key(run_id: &str, task_id: &str, tool: &str, params: &Term) -> String {
    let mut h = Sha256::new();
    for part in [run_id, task_id, tool, &params.to_string()] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToolInvocation {
    pub tool: String,
    pub params: Term,
    pub idempotency_key: String,
    pub run_id: String,
    pub task_id: String,
}

impl ToolInvocation {
    pub fn new(run_id: &str, task_id: &str, tool: &str, params: Term) -> Self {
        ToolInvocation {
            idempotency_key: idempotency_key(run_id, task_id, tool, &params),
            tool: tool.to_string(),
            params,
            run_id: run_id.to_string(),
            task_id: task_id.to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToolResult {
    pub status: ToolStatus,
    pub facts_out: Vec<Clause>,
    pub receipt: serde_json::Value,
}

impl ToolResult {
    pub fn ok(facts_out: Vec<Clause>, receipt: serde_json::Value) -> Self {
        ToolResult {
            status: ToolStatus::Ok,
            facts_out,
            receipt,
        }
    }

    pub fn failed(reason: &str) -> Self {
        ToolResult {
            status: ToolStatus::Failed,
            facts_out: Vec::new(),
            receipt: serde_json::json!({ "error": reason }),
        }
    }
}

/// Executes invocations for one tool. Return `ToolError::Transport` for
/// failures worth retrying.
pub trait ToolHandler: Send + Sync {
    fn call(&self, inv: &ToolInvocation) -> Result<ToolResult, ToolError>;

    /// Side effects performed so far, for inspection.
    fn records(&self) -> Vec<serde_json::Value> {
        Vec::new()
    }
}

impl<F> ToolHandler for F
where
    F: Fn(&ToolInvocation) -> Result<ToolResult, ToolError> + Send + Sync,
{
    fn call(&self, inv: &ToolInvocation) -> Result<ToolResult, ToolError> {
        self(inv)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(25),
        }
    }
}

struct Registered {
    descriptor: ToolDescriptor,
    handler: Arc<dyn ToolHandler>,
}

/// Tools by name. Descriptors are fixed once the registry is shared; the
/// result cache and call counters are interior.
#[derive(Default)]
pub struct ToolRegistry {
    tools: IndexMap<String, Registered>,
    retry: RetryPolicy,
    cache: Mutex<HashMap<String, ToolResult>>,
    calls: Mutex<HashMap<String, usize>>,
}

impl std::fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToolRegistry").field("tools", &self.tools.keys().collect::<Vec<_>>()).finish()
    }
}

impl ToolRegistry {
    pub fn new() -> Self {
        ToolRegistry::default()
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn register_tool(&mut self, descriptor: ToolDescriptor, handler: Arc<dyn ToolHandler>) -> Result<(), ToolError> {
        if self.tools.contains_key(&descriptor.name) {
            return Err(ToolError::DuplicateTool(descriptor.name));
        }
        if descriptor.kind == ToolKind::Grounding && descriptor.signature.is_none() {
            return Err(ToolError::Config(format!("grounding tool `{}` declares no predicate", descriptor.name)));
        }
        self.tools.insert(descriptor.name.clone(), Registered { descriptor, handler });
        Ok(())
    }

    pub fn catalog(&self) -> Catalog {
        Catalog {
            tools: self.tools.values().map(|r| r.descriptor.clone()).collect(),
        }
    }

    pub fn descriptor(&self, name: &str) -> Option<&ToolDescriptor> {
        self.tools.get(name).map(|r| &r.descriptor)
    }

    /// Handler executions so far; cache hits do not count.
    pub fn call_count(&self, tool: &str) -> usize {
        self.calls.lock().expect("calls lock").get(tool).copied().unwrap_or(0)
    }

    pub fn records(&self, tool: &str) -> Vec<serde_json::Value> {
        self.tools.get(tool).map(|r| r.handler.records()).unwrap_or_default()
    }

    /// Runs an invocation with retries for transport failures. Idempotent
    /// tools answer repeated keys from the cache without calling the handler.
    pub fn invoke_tool(&self, inv: &ToolInvocation) -> Result<ToolResult, ToolError> {
        let reg = self
            .tools
            .get(&inv.tool)
            .ok_or_else(|| ToolError::UnknownTool(inv.tool.clone()))?;
        let d = &reg.descriptor;
        if !inv.params.is_ground() {
            return Err(ToolError::NonGroundParams {
                tool: inv.tool.clone(),
                params: inv.params.to_string(),
            });
        }
        if d.kind == ToolKind::Action {
            if let Some(sig) = &d.signature {
                if PredicateKey::of(&inv.params).as_ref() != Some(sig) {
                    return Err(ToolError::SignatureMismatch {
                        tool: inv.tool.clone(),
                        got: inv.params.to_string(),
                        expected: sig.clone(),
                    });
                }
            }
        }
        if d.idempotent {
            if let Some(hit) = self.cache.lock().expect("cache lock").get(&inv.idempotency_key) {
                return Ok(hit.clone());
            }
        }
        let result = self.call_with_retry(reg, inv)?;
        if result.status == ToolStatus::Ok {
            if let (ToolKind::Grounding, Some(sig)) = (d.kind, &d.signature) {
                if let Some(bad) = result.facts_out.iter().find(|f| !f.is_ground_fact() || &f.key() != sig) {
                    return Err(ToolError::SignatureMismatch {
                        tool: inv.tool.clone(),
                        got: bad.to_string(),
                        expected: sig.clone(),
                    });
                }
            }
            if d.idempotent {
                self.cache
                    .lock()
                    .expect("cache lock")
                    .insert(inv.idempotency_key.clone(), result.clone());
            }
        }
        Ok(result)
    }

    fn call_with_retry(&self, reg: &Registered, inv: &ToolInvocation) -> Result<ToolResult, ToolError> {
        let attempts = self.retry.attempts.max(1);
        let mut last = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.retry.base_delay * 2u32.pow(attempt - 1));
            }
            *self.calls.lock().expect("calls lock").entry(inv.tool.clone()).or_default() += 1;
            match reg.handler.call(inv) {
                Err(ToolError::Transport { message, .. }) => {
                    log::warn!("{} attempt {} failed: {message}", inv.tool, attempt + 1);
                    last = Some(message);
                }
                other => return other,
            }
        }
        Err(ToolError::Transport {
            tool: inv.tool.clone(),
            attempts,
            message: last.unwrap_or_default(),
        })
    }

    /// Calls the producer of `predicate` once per distinct input tuple and
    /// returns the merged, de-duplicated facts.
    pub fn ground_predicate(
        &self,
        run_id: &str,
        task_id: &str,
        predicate: &PredicateKey,
        bindings_needed: &[Vec<Term>],
    ) -> Result<Vec<Clause>, ToolError> {
        let producer = self
            .tools
            .values()
            .find(|r| r.descriptor.produces() == Some(predicate))
            .ok_or_else(|| ToolError::NoProducer(predicate.clone()))?;
        let mut seen_inputs = HashSet::new();
        let mut seen_facts = HashSet::new();
        let mut out = Vec::new();
        for tuple in bindings_needed {
            if !seen_inputs.insert(tuple) {
                continue;
            }
            let params = match tuple.as_slice() {
                [single] => single.clone(),
                many => Term::proper_list(many.to_vec()),
            };
            let inv = ToolInvocation::new(run_id, task_id, &producer.descriptor.name, params);
            let result = self.invoke_tool(&inv)?;
            if result.status == ToolStatus::Failed {
                return Err(ToolError::Failed {
                    tool: inv.tool,
                    message: result.receipt.to_string(),
                });
            }
            for f in result.facts_out {
                if seen_facts.insert(f.clone()) {
                    out.push(f);
                }
            }
        }
        Ok(out)
    }
}
