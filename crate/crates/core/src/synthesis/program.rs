use std::collections::BTreeSet;
use std::fmt::{self, Write};

use serde::{Deserialize, Serialize};

use crate::logic::{Clause, PartitionTag, PredicateKey, Program};

/// Where a clause of a task program came from.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "origin", content = "source", rename_all = "snake_case")]
pub enum Origin {
    Semantics,
    PriorTask(String),
    Instruction,
    ToolGrounding(String),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Semantics => f.write_str("semantics"),
            Origin::PriorTask(t) => write!(f, "prior task {t}"),
            Origin::Instruction => f.write_str("instruction"),
            Origin::ToolGrounding(t) => write!(f, "tool {t}"),
        }
    }
}

/// A task program: three sections plus the origin of every clause.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogicProgram {
    pub task_id: String,
    pub program: Program,
    /// Parallel to `program.clauses()`.
    pub provenance: Vec<Origin>,
    /// Predicates to fetch from grounding tools before solving.
    pub tool_predicates: BTreeSet<PredicateKey>,
    /// Predicates supplied by earlier tasks, possibly with no facts.
    pub prior_predicates: BTreeSet<PredicateKey>,
}

impl LogicProgram {
    pub fn new(task_id: &str, tagged: Vec<(PartitionTag, Clause, Origin)>, tool_predicates: BTreeSet<PredicateKey>) -> Self {
        let mut sorted = tagged;
        // Sections are contiguous; the sort is stable so order within a section holds.
        sorted.sort_by_key(|(tag, _, _)| *tag);
        let provenance = sorted.iter().map(|(_, _, o)| o.clone()).collect();
        LogicProgram {
            task_id: task_id.to_string(),
            program: Program::from_tagged(sorted.into_iter().map(|(t, c, _)| (t, c))),
            provenance,
            tool_predicates,
            prior_predicates: BTreeSet::new(),
        }
    }

    pub fn tagged(&self) -> impl Iterator<Item = (PartitionTag, &Clause, &Origin)> + '_ {
        self.program.tagged().zip(&self.provenance).map(|((t, c), o)| (t, c, o))
    }

    pub fn section(&self, tag: PartitionTag) -> impl Iterator<Item = &Clause> + '_ {
        self.program.partition(tag)
    }

    /// Appends tool-produced facts to the facts section.
    pub fn with_groundings(&self, tool: &str, facts: Vec<Clause>) -> LogicProgram {
        let mut tagged: Vec<(PartitionTag, Clause, Origin)> =
            self.tagged().map(|(t, c, o)| (t, c.clone(), o.clone())).collect();
        let at = tagged
            .iter()
            .position(|(t, _, _)| *t != PartitionTag::Facts)
            .unwrap_or(tagged.len());
        let origin = Origin::ToolGrounding(tool.to_string());
        tagged.splice(at..at, facts.into_iter().map(|f| (PartitionTag::Facts, f, origin.clone())));
        let mut lp = LogicProgram::new(&self.task_id, tagged, self.tool_predicates.clone());
        lp.prior_predicates = self.prior_predicates.clone();
        lp
    }
}

/// ABL text with all three section markers and a provenance comment after
/// each clause. Parses back to `lp.program`.
pub fn render_program(lp: &LogicProgram) -> String {
    let mut out = String::new();
    for tag in PartitionTag::ALL {
        writeln!(out, "% SECTION: {}", tag.marker()).expect("string write");
        for (t, clause, origin) in lp.tagged() {
            if t == tag {
                writeln!(out, "{clause} % {origin}").expect("string write");
            }
        }
    }
    out
}
