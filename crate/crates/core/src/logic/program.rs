use std::collections::{BTreeSet, HashSet};
use std::ops::Range;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use super::index::ClauseIndex;
use super::term::{PredicateKey, Term, Var};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Literal {
    pub negated: bool,
    pub goal: Term,
}

impl Literal {
    pub fn pos(goal: Term) -> Self {
        Literal {
            negated: false,
            goal,
        }
    }

    pub fn neg(goal: Term) -> Self {
        Literal {
            negated: true,
            goal,
        }
    }
}

/// A definite clause with optional negated body literals.
///
/// Variables are renumbered to `0..var_count` in first-occurrence order on
/// construction, so structurally equal clauses compare equal regardless of
/// how they were built.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Clause {
    pub head: Term,
    pub body: Vec<Literal>,
    var_count: usize,
}

impl Clause {
    pub fn new(head: Term, body: Vec<Literal>) -> Self {
        let mut seen: Vec<Var> = Vec::new();
        head.collect_vars(&mut seen);
        for lit in &body {
            lit.goal.collect_vars(&mut seen);
        }
        let mut renumber = |v: &Var| {
            let id = seen.iter().position(|s| s == v).expect("collected");
            Term::Var(Var {
                name: v.name.clone(),
                id,
            })
        };
        let head = head.map_vars(&mut renumber);
        let body = body
            .into_iter()
            .map(|l| Literal {
                negated: l.negated,
                goal: l.goal.map_vars(&mut renumber),
            })
            .collect();
        Clause {
            head,
            body,
            var_count: seen.len(),
        }
    }

    pub fn fact(head: Term) -> Self {
        Clause::new(head, Vec::new())
    }

    pub fn var_count(&self) -> usize {
        self.var_count
    }

    pub fn is_fact(&self) -> bool {
        self.body.is_empty()
    }

    pub fn is_ground_fact(&self) -> bool {
        self.body.is_empty() && self.var_count == 0
    }

    pub fn key(&self) -> PredicateKey {
        PredicateKey::of(&self.head).expect("clause heads are callable")
    }

    /// First variable of a negated literal not bound by the head or an
    /// earlier positive literal.
    pub fn unsafe_negation(&self) -> Option<Var> {
        let mut bound: HashSet<Var> = self.head.variables().into_iter().collect();
        for lit in &self.body {
            let vars = lit.goal.variables();
            if lit.negated {
                if let Some(v) = vars.into_iter().find(|v| v.is_anonymous() || !bound.contains(v)) {
                    return Some(v);
                }
            } else {
                bound.extend(vars);
            }
        }
        None
    }

    /// First head variable that no positive body literal mentions.
    pub fn unbound_head_var(&self) -> Option<Var> {
        let mut bound = HashSet::new();
        for lit in self.body.iter().filter(|l| !l.negated) {
            bound.extend(lit.goal.variables());
        }
        self.head
            .variables()
            .into_iter()
            .find(|v| !bound.contains(v))
    }

    /// Predicates called from the body, in order, without duplicates.
    pub fn body_predicates(&self) -> Vec<PredicateKey> {
        let mut out = Vec::new();
        for lit in &self.body {
            collect_called(&lit.goal, &mut out);
        }
        out
    }
}

/// Collects user predicates reachable in a goal, looking through `','`,
/// `not/1` and `findall/3`.
pub(crate) fn collect_called(goal: &Term, out: &mut Vec<PredicateKey>) {
    let Some(key) = PredicateKey::of(goal) else {
        return;
    };
    match (&*key.name, key.arity) {
        (",", 2) => goal.args().iter().for_each(|g| collect_called(g, out)),
        ("not", 1) => collect_called(&goal.args()[0], out),
        ("findall", 3) => collect_called(&goal.args()[1], out),
        _ if super::solve::is_builtin(&key) => {}
        _ => {
            if !out.contains(&key) {
                out.push(key)
            }
        }
    }
}

/// The three sections of a task program.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionTag {
    /// Facts and foundational rules.
    Facts,
    /// Task-specific rules.
    Rules,
    Actions,
}

impl PartitionTag {
    pub const ALL: [PartitionTag; 3] = [PartitionTag::Facts, PartitionTag::Rules, PartitionTag::Actions];

    pub fn marker(self) -> &'static str {
        match self {
            PartitionTag::Facts => "facts",
            PartitionTag::Rules => "rules",
            PartitionTag::Actions => "actions",
        }
    }

    pub fn from_marker(s: &str) -> Option<Self> {
        PartitionTag::ALL.into_iter().find(|t| t.marker() == s)
    }
}

/// An ordered clause list split into contiguous tagged sections.
#[derive(Debug, Default)]
pub struct Program {
    clauses: Vec<Clause>,
    sections: Vec<(PartitionTag, Range<usize>)>,
    index: OnceLock<Arc<ClauseIndex>>,
}

impl Clone for Program {
    fn clone(&self) -> Self {
        Program {
            clauses: self.clauses.clone(),
            sections: self.sections.clone(),
            index: self.index.clone(),
        }
    }
}

impl PartialEq for Program {
    fn eq(&self, other: &Self) -> bool {
        self.clauses == other.clauses && self.sections == other.sections
    }
}

impl Eq for Program {}

impl Program {
    /// A program whose clauses all live in the task-rules section.
    pub fn new(clauses: Vec<Clause>) -> Self {
        Program::from_tagged(clauses.into_iter().map(|c| (PartitionTag::Rules, c)))
    }

    pub fn from_tagged(tagged: impl IntoIterator<Item = (PartitionTag, Clause)>) -> Self {
        let mut clauses = Vec::new();
        let mut sections: Vec<(PartitionTag, Range<usize>)> = Vec::new();
        for (tag, clause) in tagged {
            let at = clauses.len();
            clauses.push(clause);
            match sections.last_mut() {
                Some((last, range)) if *last == tag => range.end = at + 1,
                _ => sections.push((tag, at..at + 1)),
            }
        }
        Program {
            clauses,
            sections,
            index: OnceLock::new(),
        }
    }

    pub fn from_sections(facts: Vec<Clause>, rules: Vec<Clause>, actions: Vec<Clause>) -> Self {
        Program::from_tagged(
            facts
                .into_iter()
                .map(|c| (PartitionTag::Facts, c))
                .chain(rules.into_iter().map(|c| (PartitionTag::Rules, c)))
                .chain(actions.into_iter().map(|c| (PartitionTag::Actions, c))),
        )
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    pub fn sections(&self) -> &[(PartitionTag, Range<usize>)] {
        &self.sections
    }

    pub fn tag_of(&self, clause_index: usize) -> Option<PartitionTag> {
        self.sections
            .iter()
            .find(|(_, r)| r.contains(&clause_index))
            .map(|(t, _)| *t)
    }

    pub fn partition(&self, tag: PartitionTag) -> impl Iterator<Item = &Clause> + '_ {
        self.sections
            .iter()
            .filter(move |(t, _)| *t == tag)
            .flat_map(move |(_, r)| self.clauses[r.clone()].iter())
    }

    pub fn tagged(&self) -> impl Iterator<Item = (PartitionTag, &Clause)> + '_ {
        self.sections
            .iter()
            .flat_map(move |(t, r)| self.clauses[r.clone()].iter().map(move |c| (*t, c)))
    }

    /// A new program with `extra` appended under `tag`.
    pub fn extended(&self, tag: PartitionTag, extra: impl IntoIterator<Item = Clause>) -> Program {
        Program::from_tagged(
            self.tagged()
                .map(|(t, c)| (t, c.clone()))
                .chain(extra.into_iter().map(|c| (tag, c))),
        )
    }

    /// Predicates with at least one defining clause.
    pub fn defined_predicates(&self) -> BTreeSet<PredicateKey> {
        self.clauses.iter().map(Clause::key).collect()
    }

    pub(crate) fn index(&self) -> Arc<ClauseIndex> {
        self.index
            .get_or_init(|| Arc::new(ClauseIndex::build(&self.clauses)))
            .clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse_clause;

    #[test]
    fn renumbering_makes_equal_clauses_equal() {
        let a = Clause::new(
            Term::compound("p", vec![Term::var("Y")]),
            vec![Literal::pos(Term::compound("q", vec![Term::var("Y")]))],
        );
        let b = parse_clause("p(Y) :- q(Y).").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.var_count(), 1);
    }

    #[test]
    fn safety_checks() {
        let c = Clause::new(
            Term::compound("p", vec![Term::var("X")]),
            vec![
                Literal::pos(Term::compound("q", vec![Term::var("X")])),
                Literal::neg(Term::compound("r", vec![Term::var("Z")])),
            ],
        );
        assert_eq!(c.unsafe_negation().unwrap().name.as_ref(), "Z");
        let c = parse_clause("p(X, Y) :- q(X).").unwrap();
        assert_eq!(c.unbound_head_var().unwrap().name.as_ref(), "Y");
    }

    #[test]
    fn sections_merge_adjacent_runs() {
        let f = Clause::fact(Term::atom("a"));
        let p = Program::from_tagged(vec![
            (PartitionTag::Facts, f.clone()),
            (PartitionTag::Facts, f.clone()),
            (PartitionTag::Actions, f.clone()),
        ]);
        assert_eq!(p.sections().len(), 2);
        assert_eq!(p.partition(PartitionTag::Facts).count(), 2);
        assert_eq!(p.partition(PartitionTag::Rules).count(), 0);
        assert_eq!(p.tag_of(2), Some(PartitionTag::Actions));
    }
}
