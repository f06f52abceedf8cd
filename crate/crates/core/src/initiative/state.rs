use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use super::{Initiative, InitiativeError};
use crate::logic::{derivable, Clause, PartitionTag, Program, SolveError, SolveLimits, Term};
use crate::semantics::FactSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Ready,
    Running,
    AwaitingApproval,
    Completed,
    Failed,
    Exhausted,
    Cancelled,
}

impl TaskStatus {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            TaskStatus::Completed | TaskStatus::Failed | TaskStatus::Exhausted | TaskStatus::Cancelled
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskStatus::Pending => "pending",
            TaskStatus::Ready => "ready",
            TaskStatus::Running => "running",
            TaskStatus::AwaitingApproval => "awaiting_approval",
            TaskStatus::Completed => "completed",
            TaskStatus::Failed => "failed",
            TaskStatus::Exhausted => "exhausted",
            TaskStatus::Cancelled => "cancelled",
        }
    }

    /// Legal edges of the status graph. A repeating task loops running to ready.
    pub fn can_become(self, next: TaskStatus) -> bool {
        use TaskStatus::*;
        matches!(
            (self, next),
            (Pending, Ready)
                | (Pending, Cancelled)
                | (Ready, Running)
                | (Ready, Cancelled)
                | (Running, AwaitingApproval)
                | (Running, Ready)
                | (Running, Completed)
                | (Running, Failed)
                | (Running, Exhausted)
                | (Running, Cancelled)
                | (AwaitingApproval, Running)
                | (AwaitingApproval, Cancelled)
        )
    }
}

impl fmt::Display for TaskStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TaskStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown status `{s}`"))
    }
}

/// An immutable snapshot of a run: the fact base plus task bookkeeping.
/// Every change returns a new value; the snapshot id names the fact base
/// and only advances when facts are added.
#[derive(Clone, Debug)]
pub struct ExecutionState {
    pub run_id: String,
    snapshot: u64,
    base: Arc<Program>,
    outcomes: Arc<Vec<(String, Clause)>>,
    known: Arc<HashSet<Clause>>,
    program: Arc<OnceLock<Arc<Program>>>,
    statuses: BTreeMap<String, TaskStatus>,
    iterations: BTreeMap<String, u32>,
    limits: SolveLimits,
}

impl ExecutionState {
    /// Base facts are the semantics facts and rules, the evaluation rules
    /// and any injected metric facts.
    pub fn new(run_id: &str, initiative: &Initiative, facts: &FactSet, metrics: Vec<Clause>) -> Self {
        let base = Program::from_tagged(
            facts
                .facts
                .iter()
                .chain(&facts.foundational_rules)
                .chain(&initiative.evaluation_rules)
                .cloned()
                .chain(metrics)
                .map(|c| (PartitionTag::Facts, c)),
        );
        ExecutionState {
            run_id: run_id.to_string(),
            snapshot: 0,
            base: Arc::new(base),
            outcomes: Arc::default(),
            known: Arc::default(),
            program: Arc::default(),
            statuses: initiative.tasks.iter().map(|t| (t.id.clone(), TaskStatus::Pending)).collect(),
            iterations: BTreeMap::new(),
            limits: SolveLimits::default(),
        }
    }

    pub fn with_limits(mut self, limits: SolveLimits) -> Self {
        self.limits = limits;
        self
    }

    pub fn limits(&self) -> SolveLimits {
        self.limits
    }

    pub fn snapshot_id(&self) -> String {
        format!("snap{}", self.snapshot)
    }

    pub fn base(&self) -> &Program {
        &self.base
    }

    /// Base plus every asserted outcome.
    pub fn program(&self) -> Arc<Program> {
        self.program
            .get_or_init(|| {
                if self.outcomes.is_empty() {
                    self.base.clone()
                } else {
                    Arc::new(
                        self.base
                            .extended(PartitionTag::Facts, self.outcomes.iter().map(|(_, c)| c.clone())),
                    )
                }
            })
            .clone()
    }

    /// Derivability of `goal` against this snapshot.
    pub fn holds(&self, goal: &Term) -> Result<bool, SolveError> {
        derivable(goal, &self.program(), self.limits)
    }

    /// Asserted outcomes in assertion order, tagged with the producing task.
    pub fn outcomes(&self) -> &[(String, Clause)] {
        &self.outcomes
    }

    pub fn outcomes_of<'a>(&'a self, task: &'a str) -> impl Iterator<Item = &'a Clause> + 'a {
        self.outcomes.iter().filter(move |(t, _)| t == task).map(|(_, c)| c)
    }

    pub fn statuses(&self) -> &BTreeMap<String, TaskStatus> {
        &self.statuses
    }

    pub fn status(&self, task: &str) -> Option<TaskStatus> {
        self.statuses.get(task).copied()
    }

    pub fn iterations(&self) -> &BTreeMap<String, u32> {
        &self.iterations
    }

    pub fn iteration(&self, task: &str) -> u32 {
        self.iterations.get(task).copied().unwrap_or(0)
    }

    /// Adds ground facts as outcomes of `task`. Facts already present are skipped.
    pub fn assert_outcomes(&self, task: &str, facts: &[Clause]) -> Result<ExecutionState, InitiativeError> {
        if let Some(f) = facts.iter().find(|f| !f.is_ground_fact()) {
            return Err(InitiativeError::NonGroundOutcome(f.to_string()));
        }
        let fresh: Vec<&Clause> = {
            let mut seen = HashSet::new();
            facts
                .iter()
                .filter(|f| !self.known.contains(*f) && seen.insert(*f))
                .collect()
        };
        if fresh.is_empty() {
            return Ok(self.clone());
        }
        let mut outcomes = (*self.outcomes).clone();
        let mut known = (*self.known).clone();
        for f in fresh {
            outcomes.push((task.to_string(), f.clone()));
            known.insert(f.clone());
        }
        Ok(ExecutionState {
            snapshot: self.snapshot + 1,
            outcomes: Arc::new(outcomes),
            known: Arc::new(known),
            program: Arc::default(),
            ..self.clone()
        })
    }

    /// Moves `task` along a legal status edge.
    pub fn with_status(&self, task: &str, next: TaskStatus) -> Result<ExecutionState, InitiativeError> {
        let current = self
            .status(task)
            .ok_or_else(|| InitiativeError::UnknownTask(task.to_string()))?;
        if !current.can_become(next) {
            return Err(InitiativeError::IllegalTransition {
                task: task.to_string(),
                from: current,
                to: next,
            });
        }
        let mut out = self.clone();
        out.statuses.insert(task.to_string(), next);
        Ok(out)
    }

    pub fn with_iteration(&self, task: &str, iteration: u32) -> ExecutionState {
        let mut out = self.clone();
        out.iterations.insert(task.to_string(), iteration);
        out
    }

    pub fn all_terminal(&self) -> bool {
        self.statuses.values().all(|s| s.is_terminal())
    }
}
