use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::program::LogicProgram;
use crate::logic::{is_builtin, Clause, PartitionTag, PredicateKey, Term};
use crate::report::ValidationReport;
use crate::semantics::FactSet;
use crate::tools::Catalog;

fn location(tag: PartitionTag, i: usize) -> Option<String> {
    Some(format!("{}:{i}", tag.marker()))
}

/// Tool named by an action head: `invoke(Tool, _)` or `persist(_, _)`.
pub(crate) fn action_tool(head: &Term) -> Option<&str> {
    match (head.functor(), head.args()) {
        (Some("invoke"), [tool, _]) => tool.as_atom(),
        (Some("persist"), [store, _]) => store.as_atom().map(|_| "persist"),
        _ => None,
    }
}

/// A rule body with no comparison and no constant argument: a bare join.
fn is_bare_join(rule: &Clause) -> bool {
    rule.body.iter().all(|l| {
        let key = PredicateKey::of(&l.goal);
        !l.negated
            && key.is_some_and(|k| !is_builtin(&k))
            && l.goal.args().iter().all(|a| matches!(a, Term::Var(_)))
    })
}

pub fn validate_program(lp: &LogicProgram, facts: &FactSet, catalog: &Catalog) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut defined = lp.program.defined_predicates();
    defined.extend(facts.predicates());
    defined.extend(lp.prior_predicates.iter().cloned());

    let mut index_in_section: HashMap<PartitionTag, usize> = HashMap::new();
    for (tag, clause, _) in lp.tagged() {
        let n = index_in_section.entry(tag).or_default();
        let at = location(tag, *n);
        *n += 1;
        if tag == PartitionTag::Facts && clause.is_fact() && !clause.is_ground_fact() {
            report.error("E_NONGROUND_FACT", format!("fact `{clause}` is not ground"), at.clone());
        }
        if let Some(v) = clause.unsafe_negation() {
            report.error("E_UNSAFE_NEGATION", format!("variable {} in a negated literal is unbound", v.name), at.clone());
        }
        if !clause.is_fact() {
            if let Some(v) = clause.unbound_head_var() {
                report.error("E_UNSAFE_HEAD", format!("head variable {} is unbound", v.name), at.clone());
            }
        }
        if tag == PartitionTag::Actions {
            match action_tool(&clause.head) {
                None => report.error(
                    "E_BAD_ACTION_HEAD",
                    format!("action head `{}` is not invoke/2 or persist/2", clause.head),
                    at.clone(),
                ),
                Some(tool) if !catalog.contains(tool) => {
                    report.error("E_UNREGISTERED_TOOL", format!("tool `{tool}` is not registered"), at.clone())
                }
                Some(_) => {}
            }
        }
        for key in clause.body_predicates().into_iter().filter(|k| !defined.contains(k)) {
            if catalog.producer(&key).is_some() {
                report.tool_grounded.insert(key);
            } else {
                report.error("E_UNDEFINED_PREDICATE", format!("`{key}` is not defined"), at.clone());
            }
        }
    }

    let actions: Vec<&Clause> = lp.section(PartitionTag::Actions).collect();
    let rules: Vec<&Clause> = lp.section(PartitionTag::Rules).collect();
    let roots: Vec<PredicateKey> = if actions.is_empty() {
        rules.iter().map(|c| c.key()).collect()
    } else {
        actions.iter().flat_map(|c| c.body_predicates()).collect()
    };
    let mut reachable = BTreeSet::new();
    let mut queue: VecDeque<PredicateKey> = roots.into();
    while let Some(key) = queue.pop_front() {
        if reachable.insert(key.clone()) {
            for c in lp.program.clauses().iter().filter(|c| c.key() == key) {
                queue.extend(c.body_predicates());
            }
        }
    }
    let mut index_in_section: HashMap<PartitionTag, usize> = HashMap::new();
    for (tag, clause, _) in lp.tagged() {
        let n = index_in_section.entry(tag).or_default();
        let at = location(tag, *n);
        *n += 1;
        if tag != PartitionTag::Actions && !clause.is_fact() && !reachable.contains(&clause.key()) {
            report.warn("W_UNREACHABLE_RULE", format!("rule for `{}` is never used", clause.key()), at);
        }
    }
    if actions.is_empty() && !rules.is_empty() && rules.iter().all(|r| is_bare_join(r)) {
        report.warn("W_BARE_JOIN", "program has no actions and its rule applies no filter", None);
    }
    report
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpactDecision {
    AutoApprove,
    NeedsHumanApproval,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImpactClass {
    pub decision: ImpactDecision,
    pub reasons: Vec<String>,
}

impl ImpactClass {
    pub fn needs_approval(&self) -> bool {
        self.decision == ImpactDecision::NeedsHumanApproval
    }
}

pub fn classify_impact(lp: &LogicProgram, catalog: &Catalog, report: &ValidationReport) -> ImpactClass {
    let mut reasons = Vec::new();
    let mut seen = BTreeSet::new();
    for clause in lp.section(PartitionTag::Actions) {
        if let Some(tool) = action_tool(&clause.head) {
            if catalog.get(tool).is_some_and(|d| d.is_high_impact()) && seen.insert(tool.to_string()) {
                reasons.push(format!("invokes high-impact tool `{tool}`"));
            }
        }
    }
    for w in &report.warnings {
        reasons.push(format!("warning {w}"));
    }
    let decision = if reasons.is_empty() {
        ImpactDecision::AutoApprove
    } else {
        ImpactDecision::NeedsHumanApproval
    };
    ImpactClass { decision, reasons }
}
