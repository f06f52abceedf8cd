use std::fmt::Write;

use super::compile::{assemble, synthesize_program, PriorOutcome};
use super::instruction::TaskInstruction;
use super::program::LogicProgram;
use super::SynthesisError;
use crate::logic::{parse_program, PartitionTag};
use crate::semantics::FactSet;
use crate::tools::Catalog;

/// Everything an agent may consult besides the instruction.
#[derive(Clone, Copy)]
pub struct SynthesisContext<'a> {
    pub facts: &'a FactSet,
    pub prior: &'a [PriorOutcome],
    pub catalog: &'a Catalog,
}

impl SynthesisContext<'_> {
    /// Predicates with their fact counts, foundational rules, and tools.
    pub fn summary(&self) -> String {
        let mut out = semantics_summary(self.facts);
        for p in self.prior {
            let _ = writeln!(out, "prior task {}: {} facts", p.task, p.facts.len());
        }
        out.push_str("tools:\n");
        out.push_str(&self.catalog.summary());
        out
    }
}

pub fn semantics_summary(facts: &FactSet) -> String {
    let mut out = String::from("predicates:\n");
    for key in facts.predicates() {
        let n = facts.facts.iter().filter(|f| f.key() == key).count();
        let _ = writeln!(out, "  {key} ({n} facts)");
    }
    out.push_str("foundational rules:\n");
    for r in &facts.foundational_rules {
        let _ = writeln!(out, "  {}", r.to_string().replace('\n', " "));
    }
    out
}

pub trait AgentAdapter: Send + Sync {
    fn name(&self) -> &str;
    fn synthesize(&self, instr: &TaskInstruction, ctx: &SynthesisContext<'_>) -> Result<LogicProgram, SynthesisError>;
}

/// Deterministic template compiler over structured instructions.
#[derive(Clone, Copy, Debug, Default)]
pub struct TemplateAgent;

impl AgentAdapter for TemplateAgent {
    fn name(&self) -> &str {
        "template"
    }

    fn synthesize(&self, instr: &TaskInstruction, ctx: &SynthesisContext<'_>) -> Result<LogicProgram, SynthesisError> {
        synthesize_program(instr, ctx.facts, ctx.prior, ctx.catalog)
    }
}

/// Adapter for text-completion agents. The completion function receives a
/// prompt and returns ABL holding the rules and actions sections; facts are
/// added the same way as for the template agent.
pub struct TextAgent<F> {
    name: String,
    complete: F,
}

impl<F> TextAgent<F>
where
    F: Fn(&str) -> Result<String, String> + Send + Sync,
{
    pub fn new(name: &str, complete: F) -> Self {
        TextAgent {
            name: name.to_string(),
            complete,
        }
    }

    pub fn prompt(instr: &TaskInstruction, ctx: &SynthesisContext<'_>) -> String {
        let instruction = serde_json::to_string_pretty(instr).unwrap_or_default();
        format!(
            "Write an ABL program for task {}.\nGoal: {}\nInstruction:\n{instruction}\n\n{}\n\
             Reply with `% SECTION: rules` and `% SECTION: actions` only. \
             Action heads are invoke(Tool, Params) or persist({}, Fact).\n",
            instr.task_id,
            instr.goal_text,
            ctx.summary(),
            instr.task_id
        )
    }
}

impl<F> AgentAdapter for TextAgent<F>
where
    F: Fn(&str) -> Result<String, String> + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn synthesize(&self, instr: &TaskInstruction, ctx: &SynthesisContext<'_>) -> Result<LogicProgram, SynthesisError> {
        let text = (self.complete)(&Self::prompt(instr, ctx)).map_err(SynthesisError::Agent)?;
        let program = parse_program(&text).map_err(|source| SynthesisError::Parse {
            field: format!("{} output", self.name),
            source,
        })?;
        if program.partition(PartitionTag::Facts).next().is_some() {
            return Err(SynthesisError::Agent(format!("{} returned clauses in the facts section", self.name)));
        }
        let rules = program.partition(PartitionTag::Rules).cloned().collect();
        let actions = program.partition(PartitionTag::Actions).cloned().collect();
        assemble(&instr.task_id, rules, actions, ctx.facts, ctx.prior, ctx.catalog)
    }
}
