use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::InitiativeError;
use crate::logic::{parse_program, parse_term, unify, Clause, PredicateKey, Substitution, Term, Var};

/// Task declaration as written in `initiative.json`; conditions are ABL text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    /// Instruction file name relative to the bundle; defaults to `instructions/<id>.json`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
    #[serde(default)]
    pub requires: Vec<String>,
    #[serde(default)]
    pub preconditions: Vec<String>,
    #[serde(default)]
    pub postconditions: Vec<String>,
    #[serde(default)]
    pub allowed_tools: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeat_until: Option<RepeatSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatSpec {
    pub goal: String,
    pub max_iterations: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitiativeSpec {
    pub id: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub tasks: Vec<TaskSpec>,
    /// ABL clauses defining `resolved/1`, `success/1` and friends.
    #[serde(default)]
    pub evaluation_rules: String,
    #[serde(default)]
    pub metrics_inputs: Vec<String>,
}

impl InitiativeSpec {
    pub fn from_json(text: &str) -> Result<Self, InitiativeError> {
        serde_json::from_str(text).map_err(|e| InitiativeError::Json(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, InitiativeError> {
        let text = std::fs::read_to_string(path).map_err(|e| InitiativeError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RepeatRule {
    pub goal: Term,
    pub max_iterations: u32,
}

/// A task with parsed conditions.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskDef {
    pub id: String,
    pub instruction: String,
    pub requires: Vec<Term>,
    pub preconditions: Vec<Term>,
    pub postconditions: Vec<Term>,
    pub allowed_tools: Vec<String>,
    pub repeat: Option<RepeatRule>,
}

/// An initiative ready to execute.
#[derive(Clone, Debug, PartialEq)]
pub struct Initiative {
    pub id: String,
    pub description: String,
    pub tasks: Vec<TaskDef>,
    pub evaluation_rules: Vec<Clause>,
    pub metrics_inputs: Vec<Term>,
}

pub(crate) fn parse_condition(text: &str, location: &str) -> Result<Term, InitiativeError> {
    let term = parse_term(text).map_err(|source| InitiativeError::Parse {
        location: location.to_string(),
        source,
    })?;
    if !term.is_callable() {
        return Err(InitiativeError::NotCallable {
            location: location.to_string(),
            term: term.to_string(),
        });
    }
    Ok(term)
}

fn parse_all(texts: &[String], location: &str) -> Result<Vec<Term>, InitiativeError> {
    texts.iter().map(|t| parse_condition(t, location)).collect()
}

impl Initiative {
    /// Parses every condition; fails on the first malformed one. Run
    /// `validate_initiative` first for a full report.
    pub fn compile(spec: &InitiativeSpec) -> Result<Self, InitiativeError> {
        let mut tasks = Vec::with_capacity(spec.tasks.len());
        let mut seen = BTreeSet::new();
        for t in &spec.tasks {
            if !seen.insert(t.id.as_str()) {
                return Err(InitiativeError::DuplicateTask(t.id.clone()));
            }
            let repeat = match &t.repeat_until {
                Some(r) => Some(RepeatRule {
                    goal: parse_condition(&r.goal, &format!("{}.repeat_until", t.id))?,
                    max_iterations: r.max_iterations.max(1),
                }),
                None => None,
            };
            tasks.push(TaskDef {
                id: t.id.clone(),
                instruction: t.instruction.clone().unwrap_or_else(|| format!("instructions/{}.json", t.id)),
                requires: parse_all(&t.requires, &format!("{}.requires", t.id))?,
                preconditions: parse_all(&t.preconditions, &format!("{}.preconditions", t.id))?,
                postconditions: parse_all(&t.postconditions, &format!("{}.postconditions", t.id))?,
                allowed_tools: t.allowed_tools.clone(),
                repeat,
            });
        }
        let evaluation_rules = parse_program(&spec.evaluation_rules)
            .map_err(|source| InitiativeError::Parse {
                location: "evaluation_rules".into(),
                source,
            })?
            .clauses()
            .to_vec();
        Ok(Initiative {
            id: spec.id.clone(),
            description: spec.description.clone(),
            tasks,
            evaluation_rules,
            metrics_inputs: parse_all(&spec.metrics_inputs, "metrics_inputs")?,
        })
    }

    pub fn task(&self, id: &str) -> Option<&TaskDef> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn task_ids(&self) -> Vec<String> {
        self.tasks.iter().map(|t| t.id.clone()).collect()
    }

    /// For each task, the tasks whose postconditions can satisfy one of its
    /// preconditions.
    pub fn dependencies(&self) -> BTreeMap<String, BTreeSet<String>> {
        dependency_edges(&self.tasks)
    }
}

pub(crate) fn dependency_edges(tasks: &[TaskDef]) -> BTreeMap<String, BTreeSet<String>> {
    let mut out = BTreeMap::new();
    for t in tasks {
        let deps: BTreeSet<String> = tasks
            .iter()
            .filter(|o| o.id != t.id)
            .filter(|o| {
                t.preconditions
                    .iter()
                    .any(|p| o.postconditions.iter().any(|q| unifiable(p, q)))
            })
            .map(|o| o.id.clone())
            .collect();
        out.insert(t.id.clone(), deps);
    }
    out
}

/// Unifiability with the two terms' variables kept apart.
pub(crate) fn unifiable(a: &Term, b: &Term) -> bool {
    let shift = a.variables().iter().map(|v| v.id + 1).max().unwrap_or(0);
    let b = b.map_vars(&mut |v| Term::Var(Var { name: v.name.clone(), id: v.id + shift }));
    unify(a, &b, &Substitution::new()).is_some()
}

pub(crate) fn predicates_of(terms: &[Term]) -> impl Iterator<Item = PredicateKey> + '_ {
    terms.iter().filter_map(PredicateKey::of)
}
