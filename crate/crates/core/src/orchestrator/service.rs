use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::bundle::Bundle;
use super::run::{start_run, ApprovalPolicy, RunConfig, RunHandle};
use super::RunError;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRequest {
    pub initiative_id: String,
    #[serde(default)]
    pub auto_approve: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approval_timeout_ms: Option<u64>,
}

/// Loaded initiatives and the runs started from them.
pub struct Orchestrator {
    bundles: BTreeMap<String, Arc<Bundle>>,
    runs: Mutex<BTreeMap<String, RunHandle>>,
    runs_root: Option<PathBuf>,
    counter: AtomicU64,
}

impl Orchestrator {
    /// Runs are stored under `runs_root/<run_id>` when a root is given.
    pub fn new(runs_root: Option<&Path>) -> Self {
        Orchestrator {
            bundles: BTreeMap::new(),
            runs: Mutex::new(BTreeMap::new()),
            runs_root: runs_root.map(Path::to_path_buf),
            counter: AtomicU64::new(0),
        }
    }

    pub fn add_bundle(&mut self, bundle: Bundle) {
        self.bundles.insert(bundle.id().to_string(), Arc::new(bundle));
    }

    pub fn bundle(&self, id: &str) -> Option<&Arc<Bundle>> {
        self.bundles.get(id)
    }

    pub fn initiatives(&self) -> impl Iterator<Item = &Arc<Bundle>> + '_ {
        self.bundles.values()
    }

    pub fn start(&self, req: &RunRequest) -> Result<RunHandle, RunError> {
        let bundle = self
            .bundles
            .get(&req.initiative_id)
            .ok_or_else(|| RunError::UnknownInitiative(req.initiative_id.clone()))?;
        let mut runs = self.runs.lock().expect("run table lock");
        let run_id = match &req.run_id {
            Some(id) if runs.contains_key(id) => return Err(RunError::DuplicateRun(id.clone())),
            Some(id) => id.clone(),
            None => loop {
                let n = self.counter.fetch_add(1, Ordering::Relaxed) + 1;
                let id = format!("{}-{n}", req.initiative_id);
                if !runs.contains_key(&id) {
                    break id;
                }
            },
        };
        let approval = if req.auto_approve {
            ApprovalPolicy::AutoApprove
        } else {
            ApprovalPolicy::Manual {
                timeout: req.approval_timeout_ms.map(Duration::from_millis),
            }
        };
        let mut config = RunConfig::new(&run_id).with_approval(approval);
        if let Some(root) = &self.runs_root {
            config = config.with_dir(&root.join(&run_id));
        }
        let handle = start_run(bundle.clone(), config)?;
        runs.insert(run_id, handle.clone());
        Ok(handle)
    }

    pub fn run(&self, run_id: &str) -> Option<RunHandle> {
        self.runs.lock().expect("run table lock").get(run_id).cloned()
    }

    pub fn runs(&self) -> Vec<RunHandle> {
        self.runs.lock().expect("run table lock").values().cloned().collect()
    }
}
