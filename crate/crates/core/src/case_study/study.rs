use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{oracle_target_set, CaseStudyError, Dataset, StudyParams};
use crate::initiative::TaskStatus;
use crate::logic::parse_term;
use crate::orchestrator::{run_initiative, Bundle, RunConfig, RunHandle, RunResult, RunStatus};
use crate::semantics::Table;

const STATIC_FILES: [&str; 4] = ["schema.json", "initiative.json", "tools.json", "metrics.abl"];

/// Copies the static bundle files from `template` into `dest` and writes
/// the dataset and params alongside them.
pub fn materialize(template: &Path, dest: &Path, data: &Dataset, params: &StudyParams) -> Result<(), CaseStudyError> {
    std::fs::create_dir_all(dest.join("instructions"))?;
    for f in STATIC_FILES {
        std::fs::copy(template.join(f), dest.join(f))?;
    }
    for entry in std::fs::read_dir(template.join("instructions"))? {
        let entry = entry?;
        std::fs::copy(entry.path(), dest.join("instructions").join(entry.file_name()))?;
    }
    let params = serde_json::to_string_pretty(&params.to_params()).expect("params serialize") + "\n";
    std::fs::write(dest.join("params.json"), params)?;
    data.write_to(dest)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub run_id: String,
    pub status: RunStatus,
    pub consumers: usize,
    pub subscriptions: usize,
    /// `target/1` facts handed to the persist tool.
    pub engine_targets: BTreeSet<String>,
    /// Recipients named in the campaign tool receipts.
    pub campaign_recipients: BTreeSet<String>,
    pub oracle_targets: BTreeSet<String>,
    pub census_calls: usize,
    pub success: bool,
    pub exact_match: bool,
    /// Smallest id on which the engine and the oracle disagree.
    pub first_difference: Option<String>,
    pub tasks: BTreeMap<String, TaskReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub status: TaskStatus,
    pub iterations: u32,
    pub events: BTreeMap<String, usize>,
    pub outcomes: usize,
}

fn first_difference(oracle: &BTreeSet<String>, sides: [&BTreeSet<String>; 2]) -> Option<String> {
    sides.iter().filter_map(|s| s.symmetric_difference(oracle).next()).min().cloned()
}

fn load_table(dir: &Path, rel: &str) -> Result<Table, CaseStudyError> {
    Table::from_csv_path(&dir.join(rel)).map_err(|e| CaseStudyError::Config(format!("{rel}: {e}")))
}

/// Runs the bundle in `dir` and scores it against the oracle computed from
/// the same files.
pub fn run_study(dir: &Path, config: RunConfig) -> Result<StudyReport, CaseStudyError> {
    let bundle = Arc::new(Bundle::load(dir).map_err(|e| CaseStudyError::Config(e.to_string()))?);
    let (result, handle) = run_initiative(bundle.clone(), config).map_err(|e| CaseStudyError::Config(e.to_string()))?;
    score_study(&bundle, &result, &handle)
}

/// Compares a finished run of the study bundle with the oracle.
pub fn score_study(bundle: &Bundle, result: &RunResult, handle: &RunHandle) -> Result<StudyReport, CaseStudyError> {
    let dir = bundle.root.as_path();
    let params = StudyParams::from_params(&bundle.params)?;
    let consumers = load_table(dir, "data/consumer.csv")?;
    let subscriptions = load_table(dir, "data/subscription.csv")?;
    let medians = bundle
        .fixtures
        .values()
        .find(|t| t.column("median_income").is_some())
        .cloned()
        .ok_or_else(|| CaseStudyError::Config("no median income fixture".into()))?;
    let oracle_targets = oracle_target_set(&consumers, &subscriptions, &medians, &params)?;

    let run_id = handle.run_id().to_string();
    let engine_targets = handle
        .records("persist")
        .iter()
        .filter(|r| r.get("run_id").and_then(Value::as_str) == Some(&run_id))
        .filter_map(|r| r.get("fact").and_then(Value::as_str).and_then(|f| parse_term(f).ok()))
        .filter(|t| t.functor() == Some("target") && t.args().len() == 1)
        .filter_map(|t| t.args()[0].as_atom().map(str::to_string))
        .collect();
    let campaign_recipients = handle
        .records("marketing_campaign")
        .iter()
        .filter(|r| r.get("run_id").and_then(Value::as_str) == Some(&run_id))
        .filter_map(|r| r.pointer("/receipt/recipients").and_then(Value::as_array).cloned())
        .flatten()
        .filter_map(|v| v.as_str().map(str::to_string))
        .collect();
    let mut tasks: BTreeMap<String, TaskReport> = result
        .summary
        .statuses
        .iter()
        .map(|(t, status)| {
            let report = TaskReport {
                status: *status,
                iterations: result.summary.iterations.get(t).copied().unwrap_or(0),
                events: BTreeMap::new(),
                outcomes: result.summary.outcomes_of(t).count(),
            };
            (t.clone(), report)
        })
        .collect();
    for e in handle.events() {
        if let Some(t) = e.task().and_then(|t| tasks.get_mut(t)) {
            *t.events.entry(e.kind.to_string()).or_default() += 1;
        }
    }
    let first_difference = first_difference(&oracle_targets, [&engine_targets, &campaign_recipients]);
    Ok(StudyReport {
        run_id,
        status: result.status,
        consumers: consumers.rows.len(),
        subscriptions: subscriptions.rows.len(),
        engine_targets,
        campaign_recipients,
        oracle_targets,
        census_calls: handle.registry().call_count("census_income"),
        success: result.summary.evaluation.as_ref().is_some_and(|e| e.success),
        exact_match: first_difference.is_none(),
        first_difference,
        tasks,
    })
}

