//! Initiatives as networks of precondition-gated tasks.

mod spec;
mod state;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use spec::{Initiative, InitiativeSpec, RepeatRule, RepeatSpec, TaskDef, TaskSpec};
pub use state::{ExecutionState, TaskStatus};

use crate::logic::{parse_program, solve, Clause, ParseError, PredicateKey, SolveError, Term};
use crate::report::ValidationReport;
use spec::{dependency_edges, parse_condition, predicates_of, unifiable};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InitiativeError {
    #[error("{location}: {source}")]
    Parse { location: String, source: ParseError },
    #[error("{location}: `{term}` is not a callable condition")]
    NotCallable { location: String, term: String },
    #[error("task id `{0}` is used twice")]
    DuplicateTask(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("task `{task}`: {source}")]
    Solve { task: String, source: SolveError },
    #[error("outcome `{0}` is not a ground fact")]
    NonGroundOutcome(String),
    #[error("task `{task}` cannot move from {from} to {to}")]
    IllegalTransition { task: String, from: TaskStatus, to: TaskStatus },
    #[error("json: {0}")]
    Json(String),
    #[error("io: {0}")]
    Io(String),
}

/// What validation knows about the world outside the initiative.
#[derive(Clone, Debug, Default)]
pub struct InitiativeContext {
    /// Predicates with facts, foundational rules or a schema declaration.
    pub known: BTreeSet<PredicateKey>,
    /// Predicates a registered grounding tool can produce.
    pub tool_produced: BTreeSet<PredicateKey>,
    /// Registered tool names.
    pub tools: BTreeSet<String>,
}

/// Checks ids, condition syntax, predicate producers, tool names and
/// dependency cycles. Never fails; problems go in the report.
pub fn validate_initiative(spec: &InitiativeSpec, ctx: &InitiativeContext) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut ids = BTreeSet::new();
    for t in &spec.tasks {
        if !crate::logic::is_atom_name(&t.id) {
            report.error("E_BAD_TASK_ID", format!("`{}` is not an atom", t.id), Some(t.id.clone()));
        }
        if !ids.insert(t.id.as_str()) {
            report.error("E_DUPLICATE_TASK", format!("task id `{}` is used twice", t.id), Some(t.id.clone()));
        }
    }

    let mut tasks = Vec::new();
    for t in &spec.tasks {
        let mut parse = |texts: &[String], field: &str| -> Vec<Term> {
            texts
                .iter()
                .filter_map(|text| match parse_condition(text, field) {
                    Ok(term) => Some(term),
                    Err(e) => {
                        report.error("E_CONDITION_PARSE", format!("`{text}`: {e}"), Some(format!("{}.{field}", t.id)));
                        None
                    }
                })
                .collect()
        };
        let requires = parse(&t.requires, "requires");
        let preconditions = parse(&t.preconditions, "preconditions");
        let postconditions = parse(&t.postconditions, "postconditions");
        let repeat = t.repeat_until.as_ref().and_then(|r| {
            parse(std::slice::from_ref(&r.goal), "repeat_until")
                .pop()
                .map(|goal| RepeatRule { goal, max_iterations: r.max_iterations })
        });
        if let Some(r) = &t.repeat_until {
            if r.max_iterations == 0 {
                report.error("E_REPEAT_BOUND", "max_iterations must be at least 1", Some(t.id.clone()));
            }
        }
        for tool in &t.allowed_tools {
            if !ctx.tools.contains(tool) {
                report.error("E_UNKNOWN_TOOL", format!("tool `{tool}` is not registered"), Some(t.id.clone()));
            }
        }
        tasks.push(TaskDef {
            id: t.id.clone(),
            instruction: String::new(),
            requires,
            preconditions,
            postconditions,
            allowed_tools: t.allowed_tools.clone(),
            repeat,
        });
    }

    let mut eval_heads = BTreeSet::new();
    match parse_program(&spec.evaluation_rules) {
        Ok(p) => {
            for c in p.clauses() {
                if c.unbound_head_var().is_some() || c.unsafe_negation().is_some() {
                    report.error("E_UNSAFE_RULE", format!("evaluation rule `{c}` is unsafe"), Some("evaluation_rules".into()));
                }
                eval_heads.insert(c.key());
            }
        }
        Err(e) => report.error("E_CONDITION_PARSE", e.to_string(), Some("evaluation_rules".into())),
    }
    let mut metrics = BTreeSet::new();
    for m in &spec.metrics_inputs {
        match parse_condition(m, "metrics_inputs") {
            Ok(t) => metrics.extend(PredicateKey::of(&t)),
            Err(e) => report.error("E_CONDITION_PARSE", e.to_string(), Some("metrics_inputs".into())),
        }
    }

    let posted: BTreeSet<PredicateKey> = tasks.iter().flat_map(|t| predicates_of(&t.postconditions)).collect();
    let external = |k: &PredicateKey| {
        ctx.known.contains(k) || ctx.tool_produced.contains(k) || eval_heads.contains(k) || metrics.contains(k)
    };
    let mut unreachable: BTreeSet<String> = BTreeSet::new();
    for t in &tasks {
        for p in &t.preconditions {
            let key = PredicateKey::of(p).expect("callable");
            if external(&key) {
                continue;
            }
            if !posted.contains(&key) {
                report.error(
                    "E_DANGLING_PREDICATE",
                    format!("precondition `{p}` uses `{key}`, which no task, fact or tool produces"),
                    Some(t.id.clone()),
                );
            } else if !tasks
                .iter()
                .filter(|o| o.id != t.id)
                .any(|o| o.postconditions.iter().any(|q| unifiable(p, q)))
            {
                unreachable.insert(t.id.clone());
            }
        }
        for r in &t.requires {
            let key = PredicateKey::of(r).expect("callable");
            if !ctx.known.contains(&key) && !ctx.tool_produced.contains(&key) && !posted.contains(&key) {
                report.error(
                    "E_UNSATISFIED_REQUIREMENT",
                    format!("required data `{key}` has no facts and no producing tool"),
                    Some(t.id.clone()),
                );
            }
        }
    }

    let deps = dependency_edges(&tasks);
    let guarded: BTreeSet<&str> = tasks.iter().filter(|t| t.repeat.is_some()).map(|t| t.id.as_str()).collect();
    for cycle in find_cycles(&deps) {
        if !cycle.iter().any(|t| guarded.contains(t.as_str())) {
            report.error(
                "E_CYCLE",
                format!("tasks {} depend on each other without a repeat_until guard", cycle.join(" -> ")),
                Some(cycle[0].clone()),
            );
            unreachable.extend(cycle);
        }
    }
    // Anything downstream of an unreachable task is unreachable too.
    loop {
        let more: Vec<String> = deps
            .iter()
            .filter(|(t, d)| !unreachable.contains(*t) && d.iter().any(|x| unreachable.contains(x)))
            .map(|(t, _)| t.clone())
            .collect();
        if more.is_empty() {
            break;
        }
        unreachable.extend(more);
    }
    for t in unreachable {
        report.warn("W_UNREACHABLE_TASK", format!("task `{t}` can never become ready"), Some(t));
    }
    report
}

/// Elementary cycles found by depth-first search, one per back edge.
fn find_cycles(deps: &BTreeMap<String, BTreeSet<String>>) -> Vec<Vec<String>> {
    fn visit(
        node: &str,
        deps: &BTreeMap<String, BTreeSet<String>>,
        stack: &mut Vec<String>,
        done: &mut BTreeSet<String>,
        out: &mut Vec<Vec<String>>,
    ) {
        stack.push(node.to_string());
        for next in deps.get(node).into_iter().flatten() {
            if let Some(pos) = stack.iter().position(|s| s == next) {
                out.push(stack[pos..].to_vec());
            } else if !done.contains(next) {
                visit(next, deps, stack, done, out);
            }
        }
        stack.pop();
        done.insert(node.to_string());
    }
    let mut out = Vec::new();
    let mut done = BTreeSet::new();
    for node in deps.keys() {
        if !done.contains(node) {
            visit(node, deps, &mut Vec::new(), &mut done, &mut out);
        }
    }
    out
}

/// Tasks that are neither started nor finished and whose preconditions all
/// hold in `state`.
pub fn ready_tasks(initiative: &Initiative, state: &ExecutionState) -> Result<BTreeSet<String>, InitiativeError> {
    let mut ready = BTreeSet::new();
    for t in &initiative.tasks {
        if !matches!(state.status(&t.id), Some(TaskStatus::Pending | TaskStatus::Ready)) {
            continue;
        }
        let mut all = true;
        for p in &t.preconditions {
            let holds = state.holds(p).map_err(|source| InitiativeError::Solve {
                task: t.id.clone(),
                source,
            })?;
            if !holds {
                all = false;
                break;
            }
        }
        if all {
            ready.insert(t.id.clone());
        }
    }
    Ok(ready)
}

/// Asserts the outcomes, then verifies every postcondition. Returns the new
/// snapshot and, on failure, the first postcondition that does not hold.
pub fn complete_task(
    task: &TaskDef,
    state: &ExecutionState,
    outcome_facts: &[Clause],
) -> Result<(ExecutionState, Option<Term>), InitiativeError> {
    if state.status(&task.id) != Some(TaskStatus::Running) {
        return Err(InitiativeError::IllegalTransition {
            task: task.id.clone(),
            from: state.status(&task.id).unwrap_or(TaskStatus::Pending),
            to: TaskStatus::Completed,
        });
    }
    let next = state.assert_outcomes(&task.id, outcome_facts)?;
    for q in &task.postconditions {
        let holds = next.holds(q).map_err(|source| InitiativeError::Solve {
            task: task.id.clone(),
            source,
        })?;
        if !holds {
            let failed = next.with_status(&task.id, TaskStatus::Failed)?;
            return Ok((failed, Some(q.clone())));
        }
    }
    Ok((next.with_status(&task.id, TaskStatus::Completed)?, None))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepeatDecision {
    Reactivate,
    Stop,
    Exhausted,
}

/// `iteration` counts finished runs of the task, starting at 1.
pub fn check_repeat(task: &TaskDef, state: &ExecutionState, iteration: u32) -> Result<RepeatDecision, InitiativeError> {
    let Some(rule) = &task.repeat else {
        return Ok(RepeatDecision::Stop);
    };
    let done = state.holds(&rule.goal).map_err(|source| InitiativeError::Solve {
        task: task.id.clone(),
        source,
    })?;
    Ok(if done {
        RepeatDecision::Stop
    } else if iteration < rule.max_iterations {
        RepeatDecision::Reactivate
    } else {
        RepeatDecision::Exhausted
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub success: bool,
    /// Bindings from the first solution of each metric input, as ABL text.
    pub bindings: BTreeMap<String, String>,
    /// Derivable `outcome(I, X)` values.
    pub outcomes: Vec<String>,
}

/// Solves `success(I)` for the initiative id and reports metric bindings.
pub fn evaluate_initiative(initiative: &Initiative, state: &ExecutionState) -> Result<Evaluation, InitiativeError> {
    let id = Term::atom(&initiative.id);
    let err = |source| InitiativeError::Solve {
        task: initiative.id.clone(),
        source,
    };
    let program = state.program();
    let success = crate::logic::derivable(&Term::compound("success", vec![id.clone()]), &program, state.limits()).map_err(err)?;
    let mut bindings = BTreeMap::new();
    for metric in &initiative.metrics_inputs {
        if let Some(first) = solve(metric, &program, state.limits()).next() {
            for (var, value) in first.map_err(err)?.iter() {
                bindings.insert(var.name.to_string(), value.to_string());
            }
        }
    }
    let outcome = Term::compound("outcome", vec![id, Term::var("X")]);
    let outcomes = crate::logic::solve_all(&outcome, &program, state.limits())
        .map_err(err)?
        .iter()
        .map(|t| t.args()[1].to_string())
        .collect();
    Ok(Evaluation {
        success,
        bindings,
        outcomes,
    })
}

#[cfg(test)]
mod tests;
