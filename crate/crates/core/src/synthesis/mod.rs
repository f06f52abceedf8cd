//! Task-program synthesis: structured instruction to a three-section ABL
//! program, validation and impact classification.

mod agent;
mod compile;
mod instruction;
mod program;
mod validate;


pub use agent::{semantics_summary, AgentAdapter, SynthesisContext, TemplateAgent, TextAgent};
pub use compile::{assemble, synthesize_program, PriorOutcome};
pub use instruction::{json_term, load_params, ActionBinding, BatchSpec, FilterDecl, Params, TaskInstruction, COMPARISON_OPS};
pub use program::{render_program, LogicProgram, Origin};
pub use validate::{classify_impact, validate_program, ImpactClass, ImpactDecision};

pub(crate) use validate::action_tool;

use crate::logic::{ParseError, PredicateKey};

#[derive(Debug, thiserror::Error)]
pub enum SynthesisError {
    #[error("predicate `{0}` is defined by no fact, rule, prior task or tool")]
    UndefinedPredicate(PredicateKey),
    #[error("tool `{0}` is not registered")]
    UnregisteredTool(String),
    #[error("bad instruction: {0}")]
    BadInstruction(String),
    #[error("{field}: {source}")]
    Parse { field: String, source: ParseError },
    #[error("instruction parameter `${0}` has no value")]
    UnresolvedParam(String),
    #[error("agent: {0}")]
    Agent(String),
}

impl SynthesisError {
    pub fn code(&self) -> &'static str {
        match self {
            SynthesisError::UndefinedPredicate(_) => "E_UNDEFINED_PREDICATE",
            SynthesisError::UnregisteredTool(_) => "E_UNREGISTERED_TOOL",
            SynthesisError::BadInstruction(_) => "E_BAD_INSTRUCTION",
            SynthesisError::Parse { source: ParseError::UnsafeNegation { .. }, .. } => "E_UNSAFE_NEGATION",
            SynthesisError::Parse { .. } => "E_PARSE",
            SynthesisError::UnresolvedParam(_) => "E_UNRESOLVED_PARAM",
            SynthesisError::Agent(_) => "E_AGENT",
        }
    }
}
