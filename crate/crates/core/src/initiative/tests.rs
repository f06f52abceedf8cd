use super::*;
use crate::logic::{parse_clause, PredicateKey};
use crate::semantics::FactSet;

const EVAL: &str = "outcome(i1, resolved) :- task_done(task3).
resolved(I) :- outcome(I, resolved).
success(I) :-
    resolved(I),
    customer_satisfaction(I, Score),
    Score >= 4.0.";

fn spec() -> InitiativeSpec {
    InitiativeSpec::from_json(
        &serde_json::json!({
            "id": "i1",
            "tasks": [
                {"id": "task1", "postconditions": ["task_done(task1)"], "allowed_tools": ["persist"]},
                {"id": "task2", "postconditions": ["task_done(task2)", "median_income(City, M)"]},
                {"id": "task3", "preconditions": ["task_done(task1)", "task_done(task2)", "median_income(_, _)"],
                 "postconditions": ["task_done(task3)"]}
            ],
            "evaluation_rules": EVAL,
            "metrics_inputs": ["customer_satisfaction(i1, Score)"]
        })
        .to_string(),
    )
    .unwrap()
}

fn ctx() -> InitiativeContext {
    InitiativeContext {
        known: BTreeSet::new(),
        tool_produced: BTreeSet::new(),
        tools: ["persist".to_string()].into(),
    }
}

fn facts(src: &[&str]) -> Vec<Clause> {
    src.iter().map(|s| parse_clause(s).unwrap()).collect()
}

fn state(init: &Initiative, metrics: &[&str]) -> ExecutionState {
    ExecutionState::new("r1", init, &FactSet::default(), facts(metrics))
}

fn run(init: &Initiative, s: &ExecutionState, task: &str, out: &[&str]) -> ExecutionState {
    let s = s.with_status(task, TaskStatus::Ready).unwrap().with_status(task, TaskStatus::Running).unwrap();
    let (s, failed) = complete_task(init.task(task).unwrap(), &s, &facts(out)).unwrap();
    assert_eq!(failed, None);
    s
}

#[test]
fn case_study_shape_validates() {
    let report = validate_initiative(&spec(), &ctx());
    assert!(report.is_ok(), "{:?}", report.errors);
    assert!(report.warnings.is_empty(), "{:?}", report.warnings);
}

#[test]
fn duplicate_ids_are_reported() {
    let mut s = spec();
    s.tasks[1].id = "task1".into();
    let report = validate_initiative(&s, &ctx());
    assert!(report.has_error("E_DUPLICATE_TASK"));
    assert!(matches!(Initiative::compile(&s), Err(InitiativeError::DuplicateTask(_))));
}

#[test]
fn dangling_parse_and_tool_errors() {
    let mut s = spec();
    s.tasks[2].preconditions.push("census_ready(x)".into());
    s.tasks[0].preconditions.push("broken(".into());
    s.tasks[0].allowed_tools.push("mailer".into());
    let report = validate_initiative(&s, &ctx());
    assert!(report.has_error("E_DANGLING_PREDICATE"));
    assert!(report.has_error("E_CONDITION_PARSE"));
    assert!(report.has_error("E_UNKNOWN_TOOL"));

    let mut c = ctx();
    c.tool_produced.insert(PredicateKey::new("census_ready", 1));
    let mut s = spec();
    s.tasks[2].preconditions.push("census_ready(x)".into());
    assert!(validate_initiative(&s, &c).is_ok());
}

#[test]
fn requirements_need_a_source() {
    let mut s = spec();
    s.tasks[0].requires.push("churn_risk(C, R)".into());
    assert!(validate_initiative(&s, &ctx()).has_error("E_UNSATISFIED_REQUIREMENT"));
    let mut c = ctx();
    c.known.insert(PredicateKey::new("churn_risk", 2));
    assert!(validate_initiative(&s, &c).is_ok());
}

#[test]
fn cycles_need_a_guard() {
    let mut s = spec();
    s.tasks[0].preconditions.push("task_done(task3)".into());
    let report = validate_initiative(&s, &ctx());
    assert!(report.has_error("E_CYCLE"), "{:?}", report.errors);
    assert!(report.warnings.iter().any(|w| w.code == "W_UNREACHABLE_TASK"));
    s.tasks[0].repeat_until = Some(RepeatSpec { goal: "success(i1)".into(), max_iterations: 2 });
    assert!(validate_initiative(&s, &ctx()).is_ok());
}

#[test]
fn unmatched_postcondition_is_unreachable() {
    let mut s = spec();
    s.tasks[2].preconditions.push("task_done(task9)".into());
    let report = validate_initiative(&s, &ctx());
    assert!(report.is_ok());
    assert_eq!(report.warnings[0].location.as_deref(), Some("task3"));
}

#[test]
fn readiness_follows_completions() {
    let init = Initiative::compile(&spec()).unwrap();
    let s0 = state(&init, &[]);
    assert_eq!(ready_tasks(&init, &s0).unwrap(), ["task1".to_string(), "task2".to_string()].into());
    assert_eq!(ready_tasks(&init, &s0).unwrap(), ready_tasks(&init, &s0).unwrap());
    let s1 = run(&init, &s0, "task1", &["task_done(task1)."]);
    assert_eq!(ready_tasks(&init, &s1).unwrap(), ["task2".to_string()].into());
    let s2 = run(&init, &s1, "task2", &["task_done(task2).", "median_income(rivertown, 62000)."]);
    assert_eq!(ready_tasks(&init, &s2).unwrap(), ["task3".to_string()].into());
    let s3 = run(&init, &s2, "task3", &["task_done(task3)."]);
    assert!(ready_tasks(&init, &s3).unwrap().is_empty());
    assert!(s3.all_terminal());
    // Earlier snapshots are untouched.
    assert_eq!(s0.status("task1"), Some(TaskStatus::Pending));
    assert_eq!(s0.outcomes().len(), 0);
    assert_eq!(s3.outcomes_of("task2").count(), 2);
    assert_eq!(init.dependencies()["task3"], ["task1".to_string(), "task2".to_string()].into());
}

#[test]
fn completion_checks_postconditions() {
    let init = Initiative::compile(&spec()).unwrap();
    let s = state(&init, &[]).with_status("task2", TaskStatus::Ready).unwrap().with_status("task2", TaskStatus::Running).unwrap();
    let (after, failed) = complete_task(init.task("task2").unwrap(), &s, &facts(&["task_done(task2)."])).unwrap();
    assert_eq!(failed.unwrap().to_string(), "median_income(City, M)");
    assert_eq!(after.status("task2"), Some(TaskStatus::Failed));

    let bare = TaskDef {
        id: "task1".into(),
        instruction: String::new(),
        requires: vec![],
        preconditions: vec![],
        postconditions: vec![],
        allowed_tools: vec![],
        repeat: None,
    };
    let s = state(&init, &[]).with_status("task1", TaskStatus::Ready).unwrap().with_status("task1", TaskStatus::Running).unwrap();
    let (after, failed) = complete_task(&bare, &s, &[]).unwrap();
    assert!(failed.is_none());
    assert_eq!(after.status("task1"), Some(TaskStatus::Completed));
    assert_eq!(after.snapshot_id(), s.snapshot_id());

    let err = complete_task(&bare, &s, &[Clause::fact(crate::logic::parse_term("p(X)").unwrap())]).unwrap_err();
    assert!(matches!(err, InitiativeError::NonGroundOutcome(_)));
    let not_running = complete_task(&bare, &state(&init, &[]), &[]).unwrap_err();
    assert!(matches!(not_running, InitiativeError::IllegalTransition { .. }));
}

#[test]
fn illegal_transitions_are_refused() {
    let init = Initiative::compile(&spec()).unwrap();
    let s = state(&init, &[]);
    assert!(s.with_status("task1", TaskStatus::Completed).is_err());
    assert!(s.with_status("nope", TaskStatus::Ready).is_err());
}

#[test]
fn repeat_bounds() {
    let mut sp = spec();
    sp.tasks[0].repeat_until = Some(RepeatSpec { goal: "never_true(x)".into(), max_iterations: 3 });
    let init = Initiative::compile(&sp).unwrap();
    let task = init.task("task1").unwrap();
    let s = state(&init, &[]);
    let decisions: Vec<_> = (1..=3).map(|i| check_repeat(task, &s, i).unwrap()).collect();
    assert_eq!(decisions, [RepeatDecision::Reactivate, RepeatDecision::Reactivate, RepeatDecision::Exhausted]);

    sp.tasks[0].repeat_until = Some(RepeatSpec { goal: "success(i1)".into(), max_iterations: 3 });
    let init = Initiative::compile(&sp).unwrap();
    let s = state(&init, &["customer_satisfaction(i1, 4.5).", "task_done(task3)."]);
    assert_eq!(check_repeat(init.task("task1").unwrap(), &s, 1).unwrap(), RepeatDecision::Stop);
}

#[test]
fn evaluation_threshold() {
    let init = Initiative::compile(&spec()).unwrap();
    for (score, expected) in [("4.2", true), ("4.0", true), ("3.9", false)] {
        let s = state(&init, &["task_done(task3).", &format!("customer_satisfaction(i1, {score}).")]);
        let e = evaluate_initiative(&init, &s).unwrap();
        assert_eq!(e.success, expected, "score {score}");
        assert_eq!(e.bindings["Score"], score);
        assert_eq!(e.outcomes, ["resolved"]);
    }
    let s = state(&init, &["customer_satisfaction(i1, 4.2)."]);
    let e = evaluate_initiative(&init, &s).unwrap();
    assert!(!e.success);
    assert!(e.outcomes.is_empty());
}
