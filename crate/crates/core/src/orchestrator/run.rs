use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::approval::{ApprovalError, ApprovalRequest, Decision};
use super::bundle::Bundle;
use super::event::{Event, EventKind, EventLog};
use super::replay::StateSummary;
use super::store::RunStore;
use super::RunError;
use crate::initiative::{
    check_repeat, complete_task, evaluate_initiative, ready_tasks, Evaluation, ExecutionState, RepeatDecision, TaskStatus,
};
use crate::logic::{solve_conjunction, Clause, PartitionTag, PredicateKey, Program, SolveLimits, Term};
use crate::report::ValidationReport;
use crate::synthesis::{
    action_tool, classify_impact, render_program, validate_program, AgentAdapter, ImpactClass, LogicProgram, PriorOutcome,
    SynthesisContext, TemplateAgent,
};
use crate::tools::{Catalog, ToolInvocation, ToolRegistry, ToolStatus};

/// How approval requests get decided.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ApprovalPolicy {
    /// Every request is approved at once, with decider `auto-approve`.
    AutoApprove,
    /// Requests wait for `submit_approval`. With a timeout, a run whose
    /// only open tasks await approval gives up after that long.
    Manual { timeout: Option<Duration> },
    /// Per-task decisions; tasks not listed wait as under `Manual`.
    Scripted(BTreeMap<String, Decision>),
}

/// Order in which a round's ready tasks are launched.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Schedule {
    #[default]
    Parallel,
    Serial,
    SerialReversed,
}

#[derive(Clone)]
pub struct RunConfig {
    pub run_id: String,
    pub approval: ApprovalPolicy,
    /// Directory for the run store; nothing is written when absent.
    pub run_dir: Option<PathBuf>,
    pub limits: SolveLimits,
    /// Metric facts; the bundle's when absent.
    pub metrics: Option<Vec<Clause>>,
    pub schedule: Schedule,
    pub agent: Arc<dyn AgentAdapter>,
}

impl RunConfig {
    pub fn new(run_id: &str) -> Self {
        RunConfig {
            run_id: run_id.to_string(),
            approval: ApprovalPolicy::Manual { timeout: None },
            run_dir: None,
            limits: SolveLimits::default(),
            metrics: None,
            schedule: Schedule::Parallel,
            agent: Arc::new(TemplateAgent),
        }
    }

    pub fn auto_approve(mut self) -> Self {
        self.approval = ApprovalPolicy::AutoApprove;
        self
    }

    pub fn with_approval(mut self, policy: ApprovalPolicy) -> Self {
        self.approval = policy;
        self
    }

    pub fn with_dir(mut self, dir: &Path) -> Self {
        self.run_dir = Some(dir.to_path_buf());
        self
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_metrics(mut self, metrics: Vec<Clause>) -> Self {
        self.metrics = Some(metrics);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
    TimedOut,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Running => "running",
            RunStatus::Completed => "completed",
            RunStatus::Failed => "failed",
            RunStatus::TimedOut => "timed_out",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub status: RunStatus,
    pub summary: StateSummary,
}

enum Msg {
    Prepared { task: String, result: Result<Box<Prepared>, String> },
    Executed { task: String, execution: Execution },
    Decided { approval_id: String },
}

struct Prepared {
    lp: LogicProgram,
    report: ValidationReport,
    impact: ImpactClass,
    text: String,
}

#[derive(Clone, Debug, Default)]
struct Grounding {
    tool: String,
    predicate: String,
    inputs: usize,
    calls: usize,
    facts: usize,
}

#[derive(Clone, Debug)]
struct Dispatch {
    tool: String,
    params: String,
    ok: bool,
    receipt: Value,
}

#[derive(Debug)]
struct Execution {
    groundings: Vec<Grounding>,
    dispatches: Vec<Dispatch>,
    outcome: Result<Vec<Clause>, String>,
}

pub(crate) struct Shared {
    run_id: String,
    initiative_id: String,
    events: EventLog,
    approvals: Mutex<Vec<ApprovalRequest>>,
    programs: Mutex<BTreeMap<String, String>>,
    statuses: Mutex<BTreeMap<String, TaskStatus>>,
    result: Mutex<Option<RunResult>>,
    done: Condvar,
    inbox: Mutex<Option<Sender<Msg>>>,
    registry: Arc<ToolRegistry>,
    run_dir: Option<PathBuf>,
}

/// A live or finished run. Cheap to clone; all clones observe the same run.
#[derive(Clone)]
pub struct RunHandle(Arc<Shared>);

impl RunHandle {
    pub fn run_id(&self) -> &str {
        &self.0.run_id
    }

    pub fn initiative_id(&self) -> &str {
        &self.0.initiative_id
    }

    pub fn run_dir(&self) -> Option<&Path> {
        self.0.run_dir.as_deref()
    }

    pub fn events(&self) -> Vec<Event> {
        self.0.events.all()
    }

    pub fn events_since(&self, seq: u64) -> Vec<Event> {
        self.0.events.since(seq)
    }

    pub fn wait_events(&self, seq: u64, timeout: Duration) -> Vec<Event> {
        self.0.events.wait_since(seq, timeout)
    }

    pub fn statuses(&self) -> BTreeMap<String, TaskStatus> {
        self.0.statuses.lock().expect("status lock").clone()
    }

    pub fn program(&self, task: &str) -> Option<String> {
        self.0.programs.lock().expect("program lock").get(task).cloned()
    }

    pub fn approvals(&self) -> Vec<ApprovalRequest> {
        self.0.approvals.lock().expect("approval lock").clone()
    }

    /// Records a decision exactly once and hands it to the run loop.
    pub fn submit_approval(&self, approval_id: &str, decision: Decision, decider: &str) -> Result<ApprovalRequest, ApprovalError> {
        if decision == Decision::Pending {
            return Err(ApprovalError::InvalidDecision);
        }
        let mut book = self.0.approvals.lock().expect("approval lock");
        let req = book
            .iter_mut()
            .find(|r| r.id == approval_id)
            .ok_or_else(|| ApprovalError::UnknownApproval(approval_id.to_string()))?;
        if req.decision != Decision::Pending {
            return Err(ApprovalError::AlreadyDecided {
                id: req.id.clone(),
                decision: req.decision,
            });
        }
        let inbox = self.0.inbox.lock().expect("inbox lock");
        let Some(tx) = inbox.as_ref() else {
            return Err(ApprovalError::RunFinished(self.0.run_id.clone()));
        };
        req.decision = decision;
        req.decider = Some(decider.to_string());
        tx.send(Msg::Decided {
            approval_id: approval_id.to_string(),
        })
        .map_err(|_| ApprovalError::RunFinished(self.0.run_id.clone()))?;
        Ok(req.clone())
    }

    pub fn status(&self) -> RunStatus {
        self.result().map_or(RunStatus::Running, |r| r.status)
    }

    pub fn result(&self) -> Option<RunResult> {
        self.0.result.lock().expect("result lock").clone()
    }

    pub fn wait(&self) -> RunResult {
        let mut result = self.0.result.lock().expect("result lock");
        loop {
            if let Some(r) = result.as_ref() {
                return r.clone();
            }
            result = self.0.done.wait(result).expect("result lock");
        }
    }

    pub fn wait_timeout(&self, timeout: Duration) -> Option<RunResult> {
        let result = self.0.result.lock().expect("result lock");
        let (result, _) = self
            .0
            .done
            .wait_timeout_while(result, timeout, |r| r.is_none())
            .expect("result lock");
        result.clone()
    }

    pub fn registry(&self) -> &ToolRegistry {
        &self.0.registry
    }

    /// Side-effect records of a tool, e.g. the receipts of a recorder.
    pub fn records(&self, tool: &str) -> Vec<Value> {
        self.0.registry.records(tool)
    }
}

/// Starts the run loop on its own thread.
pub fn start_run(bundle: Arc<Bundle>, config: RunConfig) -> Result<RunHandle, RunError> {
    let registry = Arc::new(bundle.registry().map_err(RunError::Tool)?);
    let store = match &config.run_dir {
        Some(dir) => Some(RunStore::create(dir).map_err(|e| RunError::Io(format!("{}: {e}", dir.display())))?),
        None => None,
    };
    let events = match &store {
        Some(s) => EventLog::with_sink(&s.events_path()).map_err(|e| RunError::Io(e.to_string()))?,
        None => EventLog::new(),
    };
    let (tx, rx) = channel();
    let shared = Arc::new(Shared {
        run_id: config.run_id.clone(),
        initiative_id: bundle.initiative.id.clone(),
        events,
        approvals: Mutex::new(Vec::new()),
        programs: Mutex::new(BTreeMap::new()),
        statuses: Mutex::new(bundle.initiative.tasks.iter().map(|t| (t.id.clone(), TaskStatus::Pending)).collect()),
        result: Mutex::new(None),
        done: Condvar::new(),
        inbox: Mutex::new(Some(tx.clone())),
        registry: registry.clone(),
        run_dir: config.run_dir.clone(),
    });
    let metrics = config.metrics.clone().unwrap_or_else(|| bundle.metrics.clone());
    let state = ExecutionState::new(&config.run_id, &bundle.initiative, &bundle.facts, metrics).with_limits(config.limits);
    let runner = Runner {
        shared: shared.clone(),
        catalog: bundle.catalog(),
        bundle,
        config,
        registry,
        state,
        tx,
        rx,
        store,
        awaiting: BTreeMap::new(),
        in_flight: BTreeSet::new(),
        queue: VecDeque::new(),
        timed_out: false,
    };
    std::thread::Builder::new()
        .name(format!("run-{}", shared.run_id))
        .spawn(move || runner.run())
        .map_err(|e| RunError::Io(e.to_string()))?;
    Ok(RunHandle(shared))
}

/// Runs to completion and returns the result with the handle.
pub fn run_initiative(bundle: Arc<Bundle>, config: RunConfig) -> Result<(RunResult, RunHandle), RunError> {
    let handle = start_run(bundle, config)?;
    Ok((handle.wait(), handle))
}

pub fn digest(program: &Program) -> String {
    hex::encode(Sha256::digest(program.to_string().as_bytes()))
}

struct Runner {
    shared: Arc<Shared>,
    bundle: Arc<Bundle>,
    config: RunConfig,
    catalog: Catalog,
    registry: Arc<ToolRegistry>,
    state: ExecutionState,
    tx: Sender<Msg>,
    rx: Receiver<Msg>,
    store: Option<RunStore>,
    /// Validated programs parked behind an approval request.
    awaiting: BTreeMap<String, LogicProgram>,
    in_flight: BTreeSet<String>,
    queue: VecDeque<String>,
    timed_out: bool,
}

impl Runner {
    fn emit(&self, kind: EventKind, payload: Value) {
        self.shared.events.emit(kind, payload);
    }

    fn sync_statuses(&self) {
        *self.shared.statuses.lock().expect("status lock") = self.state.statuses().clone();
    }

    fn transition(&mut self, task: &str, next: TaskStatus) {
        match self.state.with_status(task, next) {
            Ok(s) => self.state = s,
            Err(e) => log::error!("{e}"),
        }
        self.sync_statuses();
    }

    fn run(mut self) {
        let base_digest = digest(self.state.base());
        self.emit(
            EventKind::RunStarted,
            json!({
                "run_id": self.state.run_id,
                "initiative": self.bundle.initiative.id,
                "tasks": self.bundle.initiative.tasks.iter().map(|t| &t.id).collect::<Vec<_>>(),
                "base_digest": base_digest,
                "snapshot": self.state.snapshot_id(),
            }),
        );
        let mut round = 0u32;
        while !self.timed_out {
            let ready = match ready_tasks(&self.bundle.initiative, &self.state) {
                Ok(r) => r,
                Err(e) => {
                    log::error!("readiness check failed: {e}");
                    break;
                }
            };
            if ready.is_empty() {
                break;
            }
            round += 1;
            let mut order: Vec<String> = ready.into_iter().collect();
            if self.config.schedule == Schedule::SerialReversed {
                order.reverse();
            }
            for t in &order {
                if self.state.status(t) == Some(TaskStatus::Pending) {
                    self.transition(t, TaskStatus::Ready);
                }
                self.transition(t, TaskStatus::Running);
                self.emit(
                    EventKind::TaskReady,
                    json!({ "task": t, "round": round, "iteration": self.state.iteration(t) + 1, "snapshot": self.state.snapshot_id() }),
                );
            }
            self.in_flight = order.iter().cloned().collect();
            match self.config.schedule {
                Schedule::Parallel => order.into_iter().for_each(|t| self.launch_prepare(t)),
                Schedule::Serial | Schedule::SerialReversed => {
                    self.queue = order.into();
                    self.launch_next();
                }
            }
            while !self.in_flight.is_empty() {
                self.step();
            }
        }
        self.finish(base_digest);
    }

    fn launch_next(&mut self) {
        if let Some(t) = self.queue.pop_front() {
            self.launch_prepare(t);
        }
    }

    /// Outcomes of every other task that has run at least once, by task id.
    fn prior_outcomes(&self, task: &str) -> Vec<PriorOutcome> {
        let mut by_task: BTreeMap<&str, Vec<Clause>> = BTreeMap::new();
        for (t, c) in self.state.outcomes() {
            if t != task {
                by_task.entry(t).or_default().push(c.clone());
            }
        }
        by_task
            .into_iter()
            .map(|(t, facts)| PriorOutcome {
                task: t.to_string(),
                facts,
                produces: self.bundle.products.get(t).cloned().unwrap_or_default(),
            })
            .collect()
    }

    fn launch_prepare(&mut self, task: String) {
        let bundle = self.bundle.clone();
        let agent = self.config.agent.clone();
        let catalog = self.catalog.clone();
        let prior = self.prior_outcomes(&task);
        let tx = self.tx.clone();
        std::thread::spawn(move || {
            let result = prepare(&bundle, agent.as_ref(), &catalog, &prior, &task);
            let _ = tx.send(Msg::Prepared { task, result });
        });
    }

    fn launch_execute(&mut self, task: String, lp: LogicProgram) {
        let registry = self.registry.clone();
        let catalog = self.catalog.clone();
        let run_id = self.state.run_id.clone();
        let limits = self.config.limits;
        let tx = self.tx.clone();
        std::thread::spawn(move || {
            let execution = execute(lp, &registry, &catalog, &run_id, &task, limits);
            let _ = tx.send(Msg::Executed { task, execution });
        });
    }

    fn step(&mut self) {
        let awaiting_only = self
            .in_flight
            .iter()
            .all(|t| self.state.status(t) == Some(TaskStatus::AwaitingApproval));
        let timeout = match (&self.config.approval, awaiting_only) {
            (ApprovalPolicy::Manual { timeout: Some(d) }, true) => Some(*d),
            _ => None,
        };
        let msg = match timeout {
            Some(d) => match self.rx.recv_timeout(d) {
                Ok(m) => m,
                Err(RecvTimeoutError::Timeout) => return self.expire_approvals(),
                Err(RecvTimeoutError::Disconnected) => unreachable!("the runner holds a sender"),
            },
            None => self.rx.recv().expect("the runner holds a sender"),
        };
        match msg {
            Msg::Prepared { task, result } => self.on_prepared(task, result),
            Msg::Decided { approval_id } => self.on_decision(&approval_id),
            Msg::Executed { task, execution } => self.on_executed(task, execution),
        }
    }

    fn on_prepared(&mut self, task: String, result: Result<Box<Prepared>, String>) {
        let p = match result {
            Ok(p) => p,
            Err(reason) => return self.fail(&task, TaskStatus::Failed, &reason),
        };
        if let Some(store) = &self.store {
            store.write_program(&task, &p.text);
        }
        self.shared.programs.lock().expect("program lock").insert(task.clone(), p.text.clone());
        let findings = |v: &[crate::report::Finding]| v.iter().map(|f| f.to_string()).collect::<Vec<_>>();
        self.emit(
            EventKind::ProgramSynthesized,
            json!({
                "task": task,
                "iteration": self.state.iteration(&task) + 1,
                "agent": self.config.agent.name(),
                "program": p.text,
                "errors": findings(&p.report.errors),
                "warnings": findings(&p.report.warnings),
                "tool_predicates": p.lp.tool_predicates.iter().map(|k| k.to_string()).collect::<Vec<_>>(),
                "impact": p.impact.decision,
                "reasons": p.impact.reasons,
            }),
        );
        if !p.report.is_ok() {
            let codes: Vec<&str> = p.report.errors.iter().map(|f| f.code.as_str()).collect();
            return self.fail(&task, TaskStatus::Failed, &format!("program failed validation: {}", codes.join(", ")));
        }
        if !p.impact.needs_approval() {
            return self.launch_execute(task, p.lp);
        }
        self.transition(&task, TaskStatus::AwaitingApproval);
        let id = {
            let mut book = self.shared.approvals.lock().expect("approval lock");
            let id = format!("a{}", book.len() + 1);
            book.push(ApprovalRequest {
                id: id.clone(),
                task_id: task.clone(),
                program: p.text.clone(),
                reasons: p.impact.reasons.clone(),
                decision: Decision::Pending,
                decider: None,
            });
            id
        };
        self.emit(
            EventKind::ApprovalRequested,
            json!({ "approval_id": id, "task": task, "reasons": p.impact.reasons }),
        );
        self.awaiting.insert(task.clone(), p.lp);
        let automatic = match &self.config.approval {
            ApprovalPolicy::AutoApprove => Some((Decision::Approved, "auto-approve")),
            ApprovalPolicy::Scripted(map) => map.get(&task).map(|d| (*d, "script")),
            ApprovalPolicy::Manual { .. } => None,
        };
        if let Some((decision, decider)) = automatic {
            self.decide_internally(&id, decision, decider);
        }
    }

    fn decide_internally(&mut self, id: &str, decision: Decision, decider: &str) {
        {
            let mut book = self.shared.approvals.lock().expect("approval lock");
            let Some(req) = book.iter_mut().find(|r| r.id == id && r.decision == Decision::Pending) else {
                return;
            };
            req.decision = decision;
            req.decider = Some(decider.to_string());
        }
        self.on_decision(id);
    }

    fn on_decision(&mut self, id: &str) {
        let Some(req) = self.shared.approvals.lock().expect("approval lock").iter().find(|r| r.id == id).cloned() else {
            return;
        };
        let decider = req.decider.clone().unwrap_or_default();
        self.emit(
            EventKind::ApprovalDecided,
            json!({ "approval_id": req.id, "task": req.task_id, "decision": req.decision, "decider": decider }),
        );
        let task = req.task_id;
        match req.decision {
            Decision::Approved => {
                self.transition(&task, TaskStatus::Running);
                match self.awaiting.remove(&task) {
                    Some(lp) => self.launch_execute(task, lp),
                    None => self.fail(&task, TaskStatus::Failed, "approved program is missing"),
                }
            }
            Decision::Rejected => {
                self.awaiting.remove(&task);
                self.fail(&task, TaskStatus::Cancelled, &format!("approval {id} rejected by {decider}"));
            }
            Decision::Pending => {}
        }
    }

    fn expire_approvals(&mut self) {
        self.timed_out = true;
        let expired: Vec<String> = {
            let mut book = self.shared.approvals.lock().expect("approval lock");
            book.iter_mut()
                .filter(|r| r.decision == Decision::Pending)
                .map(|r| {
                    r.decision = Decision::Rejected;
                    r.decider = Some("timeout".into());
                    r.id.clone()
                })
                .collect()
        };
        for id in expired {
            self.on_decision(&id);
        }
    }

    fn on_executed(&mut self, task: String, ex: Execution) {
        for g in &ex.groundings {
            self.emit(
                EventKind::GroundingFetched,
                json!({ "task": task, "tool": g.tool, "predicate": g.predicate, "inputs": g.inputs, "calls": g.calls, "facts": g.facts }),
            );
        }
        for d in &ex.dispatches {
            let payload = json!({
                "task": task,
                "tool": d.tool,
                "params": d.params,
                "status": if d.ok { "ok" } else { "failed" },
                "receipt": d.receipt,
            });
            if let Some(store) = &self.store {
                store.append_receipt(&payload);
            }
            self.emit(EventKind::ActionInvoked, payload);
        }
        match ex.outcome {
            Ok(outcomes) => self.complete(&task, outcomes),
            Err(reason) => self.fail(&task, TaskStatus::Failed, &reason),
        }
    }

    fn complete(&mut self, task: &str, outcomes: Vec<Clause>) {
        let Some(def) = self.bundle.initiative.task(task).cloned() else {
            return self.fail(task, TaskStatus::Failed, "task is not in the initiative");
        };
        let iteration = self.state.iteration(task) + 1;
        let asserted = match self.state.assert_outcomes(task, &outcomes) {
            Ok(s) => s.with_iteration(task, iteration),
            Err(e) => return self.fail(task, TaskStatus::Failed, &e.to_string()),
        };
        let payload = |state: &ExecutionState, facts: &[Clause], status: TaskStatus, reason: Option<String>| {
            let mut p = json!({
                "task": task,
                "iteration": iteration,
                "outcomes": facts.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
                "snapshot": state.snapshot_id(),
                "status": status,
            });
            if let Some(r) = reason {
                p["reason"] = json!(r);
            }
            p
        };
        let decision = match check_repeat(&def, &asserted, iteration) {
            Ok(d) => d,
            Err(e) => return self.fail(task, TaskStatus::Failed, &e.to_string()),
        };
        let (next, kind, payload) = match decision {
            RepeatDecision::Reactivate => (
                asserted.with_status(task, TaskStatus::Ready),
                EventKind::TaskCompleted,
                payload(&asserted, &outcomes, TaskStatus::Ready, None),
            ),
            RepeatDecision::Exhausted => {
                let goal = def.repeat.as_ref().map(|r| r.goal.to_string()).unwrap_or_default();
                let reason = format!("`{goal}` still fails after {iteration} iterations");
                (
                    asserted.with_status(task, TaskStatus::Exhausted),
                    EventKind::TaskFailed,
                    payload(&asserted, &outcomes, TaskStatus::Exhausted, Some(reason)),
                )
            }
            // The completion marker is asserted only when the postconditions
            // hold with it, so dependents of a failed task never become ready.
            RepeatDecision::Stop => {
                let marker = Clause::fact(Term::compound("task_done", vec![Term::atom(task)]));
                match complete_task(&def, &asserted, std::slice::from_ref(&marker)) {
                    Ok((s, None)) => {
                        let mut all = outcomes.clone();
                        all.push(marker);
                        let p = payload(&s, &all, TaskStatus::Completed, None);
                        (Ok(s), EventKind::TaskCompleted, p)
                    }
                    Ok((_, Some(q))) => (
                        asserted.with_status(task, TaskStatus::Failed),
                        EventKind::TaskFailed,
                        payload(&asserted, &outcomes, TaskStatus::Failed, Some(format!("postcondition `{q}` does not hold"))),
                    ),
                    Err(e) => (Err(e), EventKind::TaskFailed, Value::Null),
                }
            }
        };
        match next {
            Ok(s) => {
                self.state = s;
                self.sync_statuses();
                self.emit(kind, payload);
                self.finish_task(task);
            }
            Err(e) => self.fail(task, TaskStatus::Failed, &e.to_string()),
        }
    }

    fn fail(&mut self, task: &str, status: TaskStatus, reason: &str) {
        self.transition(task, status);
        self.emit(EventKind::TaskFailed, json!({ "task": task, "status": status, "reason": reason }));
        self.finish_task(task);
    }

    fn finish_task(&mut self, task: &str) {
        if self.in_flight.remove(task) {
            self.launch_next();
        }
    }

    fn finish(mut self, base_digest: String) {
        let reason = if self.timed_out { "run timed out waiting for approval" } else { "preconditions never held" };
        let open: Vec<String> = self
            .state
            .statuses()
            .iter()
            .filter(|(_, s)| matches!(s, TaskStatus::Pending | TaskStatus::Ready))
            .map(|(t, _)| t.clone())
            .collect();
        for t in open {
            self.transition(&t, TaskStatus::Cancelled);
            self.emit(EventKind::TaskFailed, json!({ "task": t, "status": TaskStatus::Cancelled, "reason": reason }));
        }
        let evaluation = evaluate_initiative(&self.bundle.initiative, &self.state).unwrap_or_else(|e| {
            log::error!("evaluation failed: {e}");
            Evaluation::default()
        });
        self.emit(EventKind::InitiativeEvaluated, serde_json::to_value(&evaluation).expect("evaluation serializes"));
        let status = if self.timed_out {
            RunStatus::TimedOut
        } else if self.state.statuses().values().all(|s| *s == TaskStatus::Completed) {
            RunStatus::Completed
        } else {
            RunStatus::Failed
        };
        self.emit(EventKind::RunFinished, json!({ "status": status, "snapshot": self.state.snapshot_id() }));
        let summary = StateSummary::from_state(&self.state, &base_digest, Some(evaluation));
        let result = RunResult { status, summary };
        if let Some(store) = &self.store {
            let mut stores: BTreeMap<String, Vec<String>> = BTreeMap::new();
            for r in self.registry.records("persist") {
                if r.get("run_id").and_then(Value::as_str) != Some(&self.state.run_id) {
                    continue;
                }
                if let (Some(s), Some(f)) = (r.get("store").and_then(Value::as_str), r.get("fact").and_then(Value::as_str)) {
                    stores.entry(s.to_string()).or_default().push(format!("{f}."));
                }
            }
            store.write_persisted(&stores);
            store.write_final(&serde_json::to_value(&result).expect("result serializes"));
        }
        *self.shared.inbox.lock().expect("inbox lock") = None;
        *self.shared.result.lock().expect("result lock") = Some(result);
        self.shared.done.notify_all();
    }
}

fn prepare(
    bundle: &Bundle,
    agent: &dyn AgentAdapter,
    catalog: &Catalog,
    prior: &[PriorOutcome],
    task: &str,
) -> Result<Box<Prepared>, String> {
    let def = bundle.initiative.task(task).ok_or_else(|| format!("unknown task `{task}`"))?;
    let instr = bundle
        .instructions
        .get(task)
        .ok_or_else(|| format!("no instruction for task `{task}`"))?;
    let ctx = SynthesisContext {
        facts: &bundle.facts,
        prior,
        catalog,
    };
    let lp = agent
        .synthesize(instr, &ctx)
        .map_err(|e| format!("synthesis failed ({}): {e}", e.code()))?;
    let mut report = validate_program(&lp, &bundle.facts, catalog);
    for (i, clause) in lp.section(PartitionTag::Actions).enumerate() {
        if let Some(tool) = action_tool(&clause.head) {
            if !def.allowed_tools.is_empty() && !def.allowed_tools.iter().any(|t| t == tool) {
                report.error(
                    "E_TOOL_NOT_ALLOWED",
                    format!("task `{task}` may not use `{tool}`"),
                    Some(format!("actions:{i}")),
                );
            }
        }
    }
    let impact = classify_impact(&lp, catalog, &report);
    let text = render_program(&lp);
    Ok(Box::new(Prepared { lp, report, impact, text }))
}

/// Input tuples of every call to `key` in a rule body, found by solving
/// the literals before the call.
fn input_tuples(program: &Program, key: &PredicateKey, inputs: usize, limits: SolveLimits) -> Result<Vec<Vec<Term>>, String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for clause in program.clauses().iter().filter(|c| !c.is_fact()) {
        for (i, lit) in clause.body.iter().enumerate() {
            if lit.negated || PredicateKey::of(&lit.goal).as_ref() != Some(key) {
                continue;
            }
            for answer in solve_conjunction(&clause.body[..i], program, limits) {
                let call = answer.map_err(|e| e.to_string())?.apply(&lit.goal);
                let tuple: Vec<Term> = call.args().iter().take(inputs).cloned().collect();
                if tuple.iter().any(|t| !t.is_ground()) {
                    return Err(format!("inputs of `{call}` are unbound when `{key}` is fetched"));
                }
                if seen.insert(tuple.clone()) {
                    out.push(tuple);
                }
            }
        }
    }
    Ok(out)
}

fn execute(lp: LogicProgram, registry: &ToolRegistry, catalog: &Catalog, run_id: &str, task: &str, limits: SolveLimits) -> Execution {
    let mut ex = Execution {
        groundings: Vec::new(),
        dispatches: Vec::new(),
        outcome: Ok(Vec::new()),
    };
    ex.outcome = ground_and_dispatch(&mut ex, lp, registry, catalog, run_id, task, limits);
    ex
}

fn ground_and_dispatch(
    ex: &mut Execution,
    mut lp: LogicProgram,
    registry: &ToolRegistry,
    catalog: &Catalog,
    run_id: &str,
    task: &str,
    limits: SolveLimits,
) -> Result<Vec<Clause>, String> {
    for key in lp.tool_predicates.clone() {
        let producer = catalog.producer(&key).ok_or_else(|| format!("no tool produces `{key}`"))?;
        let tuples = input_tuples(&lp.program, &key, producer.input_count(), limits)?;
        let before = registry.call_count(&producer.name);
        let facts = registry
            .ground_predicate(run_id, task, &key, &tuples)
            .map_err(|e| format!("{}: {e}", e.code()))?;
        ex.groundings.push(Grounding {
            tool: producer.name.clone(),
            predicate: key.to_string(),
            inputs: tuples.len(),
            calls: registry.call_count(&producer.name) - before,
            facts: facts.len(),
        });
        lp = lp.with_groundings(&producer.name, facts);
    }

    let mut outcomes = Vec::new();
    for clause in lp.section(PartitionTag::Actions) {
        let mut seen = HashSet::new();
        let mut heads = Vec::new();
        for answer in solve_conjunction(&clause.body, &lp.program, limits) {
            let head = answer.map_err(|e| e.to_string())?.apply(&clause.head);
            if !head.is_ground() {
                return Err(format!("action `{head}` is not ground"));
            }
            if seen.insert(head.clone()) {
                heads.push(head);
            }
        }
        for head in heads {
            let (tool, params) = match (head.functor(), head.args()) {
                (Some("invoke"), [tool, params]) => (tool.as_atom().unwrap_or_default().to_string(), params.clone()),
                _ => ("persist".to_string(), head.clone()),
            };
            let inv = ToolInvocation::new(run_id, task, &tool, params);
            match registry.invoke_tool(&inv) {
                Ok(result) => {
                    let ok = result.status == ToolStatus::Ok;
                    ex.dispatches.push(Dispatch {
                        tool: tool.clone(),
                        params: inv.params.to_string(),
                        ok,
                        receipt: result.receipt.clone(),
                    });
                    if !ok {
                        return Err(format!("tool `{tool}` failed: {}", result.receipt));
                    }
                    outcomes.extend(result.facts_out);
                }
                Err(e) => {
                    ex.dispatches.push(Dispatch {
                        tool: tool.clone(),
                        params: inv.params.to_string(),
                        ok: false,
                        receipt: json!({ "error": e.to_string(), "code": e.code() }),
                    });
                    return Err(format!("{}: {e}", e.code()));
                }
            }
        }
    }
    Ok(outcomes)
}
