use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use super::*;
use crate::logic::{parse_term, Clause, PredicateKey, Term};

fn t(s: &str) -> Term {
    parse_term(s).unwrap()
}

fn median() -> (ToolDescriptor, Arc<dyn ToolHandler>) {
    let rows = vec![
        vec![Term::atom("rivertown"), Term::int(62000)],
        vec![Term::atom("lakeside"), Term::int(48000)],
    ];
    (
        ToolDescriptor::grounding("median_income_fixture", PredicateKey::new("median_income", 2)),
        Arc::new(FixtureHandler::new("median_income", 1, rows)),
    )
}

fn marketing() -> (ToolDescriptor, Arc<dyn ToolHandler>) {
    (
        ToolDescriptor::action("marketing_campaign", Some(PredicateKey::new("campaign", 2)))
            .high_impact()
            .idempotent(true),
        Arc::new(RecorderHandler::new()),
    )
}

fn registry() -> ToolRegistry {
    let mut r = ToolRegistry::new().with_retry(RetryPolicy { attempts: 3, base_delay: Duration::from_millis(1) });
    let (d, h) = median();
    r.register_tool(d, h).unwrap();
    let (d, h) = marketing();
    r.register_tool(d, h).unwrap();
    r.register_tool(ToolDescriptor::action("persist", None).idempotent(true), Arc::new(PersistHandler::new()))
        .unwrap();
    r
}

#[test]
fn registration_and_catalog() {
    let mut r = registry();
    let catalog = r.catalog();
    assert_eq!(catalog.names().collect::<Vec<_>>(), ["median_income_fixture", "marketing_campaign", "persist"]);
    assert!(catalog.get("marketing_campaign").unwrap().is_high_impact());
    assert_eq!(catalog.producer(&PredicateKey::new("median_income", 2)).unwrap().name, "median_income_fixture");
    assert_eq!(catalog.summary(), registry().catalog().summary());
    assert!(catalog.summary().starts_with("median_income_fixture [grounding median_income/2 idempotent]\n"));
    let (d, h) = median();
    assert_eq!(r.register_tool(d, h), Err(ToolError::DuplicateTool("median_income_fixture".into())));
}

#[test]
fn fixture_grounding() {
    let r = registry();
    let inv = ToolInvocation::new("r1", "task2", "median_income_fixture", t("rivertown"));
    let result = r.invoke_tool(&inv).unwrap();
    assert_eq!(result.facts_out, vec![Clause::fact(t("median_income(rivertown, 62000)"))]);
    let none = r
        .invoke_tool(&ToolInvocation::new("r1", "task2", "median_income_fixture", t("nowhere")))
        .unwrap();
    assert!(none.facts_out.is_empty());
}

#[test]
fn idempotent_sends_happen_once() {
    let r = registry();
    let inv = ToolInvocation::new("r1", "task3", "marketing_campaign", t("campaign(retention, [c1, c7])"));
    let first = r.invoke_tool(&inv).unwrap();
    for _ in 0..4 {
        assert_eq!(r.invoke_tool(&inv).unwrap(), first);
    }
    assert_eq!(first.receipt["recipients"], serde_json::json!(["c1", "c7"]));
    assert_eq!(r.call_count("marketing_campaign"), 1);
    assert_eq!(r.records("marketing_campaign").len(), 1);
    assert_eq!(inv.idempotency_key, idempotency_key("r1", "task3", "marketing_campaign", &inv.params));
    let other = ToolInvocation::new("r2", "task3", "marketing_campaign", inv.params.clone());
    assert_ne!(other.idempotency_key, inv.idempotency_key);
}

#[test]
fn persist_appends() {
    let handler = Arc::new(PersistHandler::new());
    let mut r = ToolRegistry::new();
    r.register_tool(ToolDescriptor::action("persist", None), handler.clone()).unwrap();
    let result = r
        .invoke_tool(&ToolInvocation::new("r1", "task3", "persist", t("persist(task3, target(c1))")))
        .unwrap();
    assert_eq!(result.facts_out, vec![Clause::fact(t("target(c1)"))]);
    assert_eq!(handler.stored("r1", "task3"), vec![Clause::fact(t("target(c1)"))]);
    let bad = r.invoke_tool(&ToolInvocation::new("r1", "task3", "persist", t("persist(X1)")));
    assert!(matches!(bad, Err(ToolError::NonGroundParams { .. })));
    let bad = r.invoke_tool(&ToolInvocation::new("r1", "task3", "persist", t("persist(1, 2)")));
    assert!(matches!(bad, Err(ToolError::Failed { .. })));
}

#[test]
fn invocation_errors() {
    let r = registry();
    let unknown = r.invoke_tool(&ToolInvocation::new("r", "t", "mailer", t("x")));
    assert_eq!(unknown.unwrap_err().code(), "E_UNKNOWN_TOOL");
    let shape = r.invoke_tool(&ToolInvocation::new("r", "t", "marketing_campaign", t("send(c1)")));
    assert_eq!(shape.unwrap_err().code(), "E_SIGNATURE");

    let mut r = ToolRegistry::new();
    let liar = |_: &ToolInvocation| Ok(ToolResult::ok(vec![Clause::fact(t("other(a, 1)"))], serde_json::Value::Null));
    r.register_tool(ToolDescriptor::grounding("liar", PredicateKey::new("median_income", 2)), Arc::new(liar))
        .unwrap();
    let err = r.invoke_tool(&ToolInvocation::new("r", "t", "liar", t("x"))).unwrap_err();
    assert_eq!(err.code(), "E_SIGNATURE");
}

#[test]
fn transport_failures_are_retried() {
    let calls = Arc::new(AtomicUsize::new(0));
    let seen = calls.clone();
    let flaky = move |inv: &ToolInvocation| {
        if seen.fetch_add(1, Ordering::SeqCst) < 2 {
            Err(ToolError::Transport { tool: inv.tool.clone(), attempts: 1, message: "reset".into() })
        } else {
            Ok(ToolResult::ok(vec![], serde_json::json!({"ok": true})))
        }
    };
    let mut r = ToolRegistry::new().with_retry(RetryPolicy { attempts: 3, base_delay: Duration::from_millis(1) });
    r.register_tool(ToolDescriptor::action("flaky", None), Arc::new(flaky)).unwrap();
    r.register_tool(
        ToolDescriptor::action("down", None),
        Arc::new(|inv: &ToolInvocation| {
            Err(ToolError::Transport { tool: inv.tool.clone(), attempts: 1, message: "refused".into() })
        }),
    )
    .unwrap();
    r.register_tool(
        ToolDescriptor::action("broken", None),
        Arc::new(|inv: &ToolInvocation| Err(ToolError::Failed { tool: inv.tool.clone(), message: "no".into() })),
    )
    .unwrap();
    assert!(r.invoke_tool(&ToolInvocation::new("r", "t", "flaky", t("x"))).is_ok());
    assert_eq!(calls.load(Ordering::SeqCst), 3);
    let err = r.invoke_tool(&ToolInvocation::new("r", "t", "down", t("x"))).unwrap_err();
    assert!(matches!(err, ToolError::Transport { attempts: 3, .. }));
    assert!(err.is_retryable());
    assert_eq!(r.call_count("down"), 3);
    assert!(r.invoke_tool(&ToolInvocation::new("r", "t", "broken", t("x"))).is_err());
    assert_eq!(r.call_count("broken"), 1);
}

#[test]
fn grounding_by_distinct_tuple() {
    let r = registry();
    let key = PredicateKey::new("median_income", 2);
    let tuples: Vec<Vec<Term>> = ["rivertown", "lakeside", "rivertown"].iter().map(|c| vec![Term::atom(c)]).collect();
    let facts = r.ground_predicate("r1", "task2", &key, &tuples).unwrap();
    assert_eq!(facts.len(), 2);
    assert_eq!(r.call_count("median_income_fixture"), 2);
    assert!(r.ground_predicate("r1", "task2", &key, &[]).unwrap().is_empty());
    let missing = r.ground_predicate("r1", "task2", &PredicateKey::new("census", 2), &tuples);
    assert_eq!(missing, Err(ToolError::NoProducer(PredicateKey::new("census", 2))));
}

#[test]
fn recipients_of_params() {
    assert_eq!(recipients(&t("[c1, c2]")), ["c1", "c2"]);
    assert_eq!(recipients(&t("campaign(x, [])")), Vec::<String>::new());
    assert_eq!(recipients(&t("send_promotion(c1)")), ["send_promotion(c1)"]);
}

#[test]
fn tools_file_round_trip() {
    let text = r#"{"tools": [
        {"name": "persist", "kind": "action", "idempotent": true, "handler": {"type": "persist"}},
        {"name": "median_income_fixture", "kind": "grounding", "signature": "median_income/2",
         "handler": {"type": "fixture", "path": "fixtures/median_income.json", "columns": ["city", "median_income"]}},
        {"name": "marketing_campaign", "kind": "action", "signature": "campaign/2", "impact": "high",
         "idempotent": true, "handler": {"type": "recorder"}}
    ]}"#;
    let file: ToolsFile = serde_json::from_str(text).unwrap();
    let table = crate::semantics::Table::from_json(r#"[{"city": "rivertown", "median_income": 62000}]"#).unwrap();
    let r = build_registry(&file.tools, &|path| {
        assert_eq!(path, "fixtures/median_income.json");
        Ok(table.clone())
    })
    .unwrap();
    let facts = r
        .ground_predicate("r", "t", &PredicateKey::new("median_income", 2), &[vec![Term::atom("rivertown")]])
        .unwrap();
    assert_eq!(facts[0].to_string(), "median_income(rivertown, 62000).");
    assert!(r.catalog().get("marketing_campaign").unwrap().is_high_impact());
}
