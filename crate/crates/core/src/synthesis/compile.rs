use std::collections::{BTreeSet, HashMap, VecDeque};

use super::instruction::{json_term, FilterDecl, TaskInstruction, COMPARISON_OPS};
use super::program::{LogicProgram, Origin};
use super::SynthesisError;
use crate::logic::{
    collect_called, parse_body, parse_term, Clause, Literal, PartitionTag, PredicateKey, Term,
};
use crate::semantics::FactSet;
use crate::tools::{Catalog, ToolKind};

/// Outcome facts of a finished task.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PriorOutcome {
    pub task: String,
    pub facts: Vec<Clause>,
    /// Predicates the task can produce; they count as defined even when
    /// the task left no facts for them.
    pub produces: BTreeSet<PredicateKey>,
}

fn term(text: &str, field: &str) -> Result<Term, SynthesisError> {
    parse_term(text).map_err(|source| SynthesisError::Parse {
        field: field.to_string(),
        source,
    })
}

fn value(v: &serde_json::Value, field: &str) -> Result<Term, SynthesisError> {
    json_term(v).map_err(|e| SynthesisError::BadInstruction(format!("{field}: {e}")))
}

fn comparison(op: &str, left: Term, right: Term) -> Result<Literal, SynthesisError> {
    if !COMPARISON_OPS.contains(&op) {
        return Err(SynthesisError::BadInstruction(format!("unknown operator `{op}`")));
    }
    Ok(Literal::pos(Term::compound(op, vec![left, right])))
}

/// The task rule body: joins in order, then filters in order.
fn rule_body(instr: &TaskInstruction) -> Result<Vec<Literal>, SynthesisError> {
    let mut body = Vec::new();
    for (i, j) in instr.joins.iter().enumerate() {
        body.extend(parse_body(j).map_err(|source| SynthesisError::Parse {
            field: format!("joins[{i}]"),
            source,
        })?);
    }
    for (i, f) in instr.filters.iter().enumerate() {
        let field = format!("filters[{i}]");
        match f {
            FilterDecl::Attribute { attribute, subject, op, value: v, bind } => {
                let subject = term(subject, &field)?;
                let v = value(v, &field)?;
                if op == "==" || op == "=" {
                    body.push(Literal::pos(Term::compound(attribute, vec![subject, v])));
                } else {
                    let bound = Term::var(bind.as_deref().unwrap_or(&format!("V{}", i + 1)));
                    body.push(Literal::pos(Term::compound(attribute, vec![subject, bound.clone()])));
                    body.push(comparison(op, bound, v)?);
                }
            }
            FilterDecl::Compare { left, op, right } => {
                body.push(comparison(op, term(left, &field)?, value(right, &field)?)?);
            }
        }
    }
    Ok(body)
}

fn action_clauses(instr: &TaskInstruction, target: &Term, catalog: &Catalog) -> Result<Vec<Clause>, SynthesisError> {
    let mut out = Vec::new();
    for (i, a) in instr.action_bindings.iter().enumerate() {
        let field = format!("action_bindings[{i}]");
        let tool = catalog
            .get(&a.tool)
            .ok_or_else(|| SynthesisError::UnregisteredTool(a.tool.clone()))?;
        if tool.kind != ToolKind::Action {
            return Err(SynthesisError::BadInstruction(format!("{field}: `{}` is not an action tool", a.tool)));
        }
        let params = term(&a.params, &field)?;
        let head = if a.tool == "persist" {
            Term::compound("persist", vec![Term::atom(&instr.task_id), params])
        } else {
            Term::compound("invoke", vec![Term::atom(&a.tool), params])
        };
        let body = match &a.batch {
            None => vec![Literal::pos(target.clone())],
            Some(b) => vec![Literal::pos(Term::compound(
                "findall",
                vec![term(&b.item, &field)?, target.clone(), Term::var(&b.into)],
            ))],
        };
        out.push(Clause::new(head, body));
    }
    Ok(out)
}

fn called(lits: &[Literal]) -> Vec<PredicateKey> {
    let mut out = Vec::new();
    for l in lits {
        collect_called(&l.goal, &mut out);
    }
    out
}

/// Template agent: one rule for the target composed of joins then filters,
/// one action clause per binding, plus the relevant facts.
pub fn synthesize_program(
    instr: &TaskInstruction,
    facts: &FactSet,
    prior_outcomes: &[PriorOutcome],
    catalog: &Catalog,
) -> Result<LogicProgram, SynthesisError> {
    let target = term(&instr.target, "target")?;
    if PredicateKey::of(&target).is_none() {
        return Err(SynthesisError::BadInstruction(format!("target `{target}` is not callable")));
    }
    let rule = Clause::new(target.clone(), rule_body(instr)?);
    if let Some(v) = rule.unbound_head_var() {
        return Err(SynthesisError::BadInstruction(format!(
            "target variable {} is not bound by any join or filter",
            v.name
        )));
    }
    let actions = action_clauses(instr, &target, catalog)?;
    assemble(&instr.task_id, vec![rule], actions, facts, prior_outcomes, catalog)
}

/// Adds to task rules and actions every fact and foundational rule whose
/// predicate they reach. Lookup order: semantics, prior outcomes, tools.
pub fn assemble(
    task_id: &str,
    rules: Vec<Clause>,
    actions: Vec<Clause>,
    facts: &FactSet,
    prior_outcomes: &[PriorOutcome],
    catalog: &Catalog,
) -> Result<LogicProgram, SynthesisError> {
    let mut rules_by_head: HashMap<PredicateKey, Vec<&Clause>> = HashMap::new();
    for r in &facts.foundational_rules {
        rules_by_head.entry(r.key()).or_default().push(r);
    }
    let schema_preds = facts.predicates();
    let prior_preds: BTreeSet<PredicateKey> = prior_outcomes
        .iter()
        .flat_map(|p| p.facts.iter().map(Clause::key).chain(p.produces.iter().cloned()))
        .collect();
    let own: BTreeSet<PredicateKey> = rules.iter().map(Clause::key).collect();

    let mut reachable: BTreeSet<PredicateKey> = BTreeSet::new();
    let mut queue: VecDeque<PredicateKey> = VecDeque::new();
    for c in rules.iter().chain(&actions) {
        queue.extend(called(&c.body));
    }
    let mut tool_predicates = BTreeSet::new();
    let mut from_prior = BTreeSet::new();
    while let Some(key) = queue.pop_front() {
        if own.contains(&key) || !reachable.insert(key.clone()) {
            continue;
        }
        if schema_preds.contains(&key) {
            for r in rules_by_head.get(&key).into_iter().flatten() {
                queue.extend(r.body_predicates());
            }
        } else if prior_preds.contains(&key) {
            from_prior.insert(key);
        } else if catalog.producer(&key).is_some() {
            tool_predicates.insert(key);
        } else {
            return Err(SynthesisError::UndefinedPredicate(key));
        }
    }

    let mut tagged = Vec::new();
    for f in facts.facts.iter().filter(|c| reachable.contains(&c.key())) {
        tagged.push((PartitionTag::Facts, f.clone(), Origin::Semantics));
    }
    for r in facts.foundational_rules.iter().filter(|c| reachable.contains(&c.key())) {
        tagged.push((PartitionTag::Facts, r.clone(), Origin::Semantics));
    }
    for p in prior_outcomes {
        for f in p.facts.iter().filter(|c| reachable.contains(&c.key()) && !schema_preds.contains(&c.key())) {
            tagged.push((PartitionTag::Facts, f.clone(), Origin::PriorTask(p.task.clone())));
        }
    }
    tagged.extend(rules.into_iter().map(|r| (PartitionTag::Rules, r, Origin::Instruction)));
    tagged.extend(actions.into_iter().map(|a| (PartitionTag::Actions, a, Origin::Instruction)));
    let mut lp = LogicProgram::new(task_id, tagged, tool_predicates);
    lp.prior_predicates = from_prior;
    Ok(lp)
}
