use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::event::{Event, EventKind};
use super::ReplayError;
use crate::initiative::{Evaluation, ExecutionState, TaskStatus};

/// The observable part of an execution state: what a log can rebuild.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub run_id: String,
    pub statuses: BTreeMap<String, TaskStatus>,
    pub iterations: BTreeMap<String, u32>,
    /// `(task, fact)` grouped by task, each in assertion order.
    pub outcomes: Vec<(String, String)>,
    /// SHA-256 of the rendered base program.
    pub base_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<Evaluation>,
}

impl StateSummary {
    pub fn from_state(state: &ExecutionState, base_digest: &str, evaluation: Option<Evaluation>) -> Self {
        StateSummary {
            run_id: state.run_id.clone(),
            statuses: state.statuses().clone(),
            iterations: state.iterations().clone(),
            outcomes: state
                .outcomes()
                .iter()
                .map(|(t, c)| (t.clone(), c.to_string()))
                .collect(),
            base_digest: base_digest.to_string(),
            evaluation,
        }
        .canonical()
    }

    /// Groups outcomes by task, keeping each task's own order, so that
    /// interleavings of independent tasks summarize identically.
    fn canonical(mut self) -> Self {
        self.outcomes.sort_by(|a, b| a.0.cmp(&b.0));
        self
    }

    pub fn outcomes_of<'a>(&'a self, task: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.outcomes.iter().filter(move |(t, _)| t == task).map(|(_, f)| f.as_str())
    }
}

fn field<'a>(e: &'a Event, name: &str) -> Result<&'a Value, ReplayError> {
    e.payload.get(name).ok_or_else(|| ReplayError::Malformed {
        line: e.seq as usize,
        message: format!("{} event lacks `{name}`", e.kind),
    })
}

fn text<'a>(e: &'a Event, name: &str) -> Result<&'a str, ReplayError> {
    field(e, name)?.as_str().ok_or_else(|| ReplayError::Malformed {
        line: e.seq as usize,
        message: format!("{} event field `{name}` is not a string", e.kind),
    })
}

struct Replayer {
    summary: StateSummary,
    known: HashSet<String>,
}

impl Replayer {
    fn set(&mut self, e: &Event, task: &str, next: TaskStatus) -> Result<(), ReplayError> {
        let current = *self.summary.statuses.get(task).ok_or_else(|| ReplayError::Malformed {
            line: e.seq as usize,
            message: format!("unknown task `{task}`"),
        })?;
        if !current.can_become(next) {
            return Err(ReplayError::IllegalTransition {
                seq: e.seq,
                task: task.to_string(),
                from: current.to_string(),
                to: next.to_string(),
            });
        }
        self.summary.statuses.insert(task.to_string(), next);
        Ok(())
    }

    fn assert_outcomes(&mut self, e: &Event, task: &str) -> Result<(), ReplayError> {
        let Some(list) = e.payload.get("outcomes") else { return Ok(()) };
        let list: Vec<String> = serde_json::from_value(list.clone()).map_err(|err| ReplayError::Malformed {
            line: e.seq as usize,
            message: err.to_string(),
        })?;
        for fact in list {
            if self.known.insert(fact.clone()) {
                self.summary.outcomes.push((task.to_string(), fact));
            }
        }
        if let Some(i) = e.payload.get("iteration").and_then(Value::as_u64) {
            self.summary.iterations.insert(task.to_string(), i as u32);
        }
        Ok(())
    }

    fn apply(&mut self, e: &Event) -> Result<(), ReplayError> {
        match e.kind {
            EventKind::RunStarted => {
                self.summary.run_id = text(e, "run_id")?.to_string();
                self.summary.base_digest = text(e, "base_digest")?.to_string();
                let tasks: Vec<String> = serde_json::from_value(field(e, "tasks")?.clone()).map_err(|err| {
                    ReplayError::Malformed {
                        line: e.seq as usize,
                        message: err.to_string(),
                    }
                })?;
                self.summary.statuses = tasks.into_iter().map(|t| (t, TaskStatus::Pending)).collect();
            }
            EventKind::TaskReady => {
                let task = text(e, "task")?;
                if self.summary.statuses.get(task) == Some(&TaskStatus::Pending) {
                    self.set(e, task, TaskStatus::Ready)?;
                }
                self.set(e, task, TaskStatus::Running)?;
            }
            EventKind::ApprovalRequested => self.set(e, text(e, "task")?, TaskStatus::AwaitingApproval)?,
            EventKind::ApprovalDecided => {
                if text(e, "decision")? == "approved" {
                    self.set(e, text(e, "task")?, TaskStatus::Running)?;
                }
            }
            EventKind::TaskCompleted | EventKind::TaskFailed => {
                let task = text(e, "task")?.to_string();
                let status: TaskStatus = text(e, "status")?.parse().map_err(|m: String| ReplayError::Malformed {
                    line: e.seq as usize,
                    message: m,
                })?;
                self.assert_outcomes(e, &task)?;
                self.set(e, &task, status)?;
            }
            EventKind::InitiativeEvaluated => {
                self.summary.evaluation = Some(serde_json::from_value(e.payload.clone()).map_err(|err| {
                    ReplayError::Malformed {
                        line: e.seq as usize,
                        message: err.to_string(),
                    }
                })?);
            }
            EventKind::ProgramSynthesized
            | EventKind::GroundingFetched
            | EventKind::ActionInvoked
            | EventKind::RunFinished => {}
        }
        Ok(())
    }
}

/// Rebuilds the final state from a log. An empty log gives the empty state.
pub fn replay(events: &[Event]) -> Result<StateSummary, ReplayError> {
    let mut r = Replayer {
        summary: StateSummary::default(),
        known: HashSet::new(),
    };
    for (i, e) in events.iter().enumerate() {
        let expected = i as u64 + 1;
        if e.seq > expected {
            return Err(ReplayError::Gap { missing: expected });
        }
        if e.seq < expected {
            return Err(ReplayError::Malformed {
                line: i + 1,
                message: format!("seq {} repeats or goes backwards", e.seq),
            });
        }
        if (e.kind == EventKind::RunStarted) != (i == 0) {
            return Err(ReplayError::Malformed {
                line: i + 1,
                message: "run_started must open the log and appear once".into(),
            });
        }
        r.apply(e)?;
    }
    Ok(r.summary.canonical())
}
