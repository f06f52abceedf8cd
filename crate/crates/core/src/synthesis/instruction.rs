use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SynthesisError;
use crate::logic::{is_atom_name, Number, Term};

/// Named constants shared by instructions and the oracle, e.g.
/// `{"product": "product1", "rate_threshold": 10.0}`.
pub type Params = BTreeMap<String, serde_json::Value>;

/// Structured task instruction, the input of the template agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskInstruction {
    pub task_id: String,
    #[serde(default)]
    pub goal_text: String,
    /// Head of the task rule, e.g. `savable_churn(C)`.
    pub target: String,
    /// Relationship and attribute literals to traverse, in order.
    #[serde(default)]
    pub joins: Vec<String>,
    #[serde(default)]
    pub filters: Vec<FilterDecl>,
    #[serde(default)]
    pub action_bindings: Vec<ActionBinding>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FilterDecl {
    /// `attribute(subject, value)` for `==`, otherwise
    /// `attribute(subject, Bind), Bind op value`.
    Attribute {
        attribute: String,
        subject: String,
        op: String,
        value: serde_json::Value,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bind: Option<String>,
    },
    /// `left op right` over variables bound earlier.
    Compare {
        left: String,
        op: String,
        right: serde_json::Value,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionBinding {
    pub tool: String,
    /// Params template; for `persist`, the fact to store.
    pub params: String,
    /// Collects every solution into one invocation instead of one per solution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<BatchSpec>,
}

/// `findall(item, Target, into)`: `into` must occur in the params template.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub into: String,
    pub item: String,
}

pub const COMPARISON_OPS: [&str; 7] = ["==", "=", "!=", ">=", ">", "=<", "<"];

/// JSON value as a term: numbers keep their int/float tag, strings are ABL text.
pub fn json_term(v: &serde_json::Value) -> Result<Term, String> {
    match v {
        serde_json::Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => Ok(Term::Number(Number::Int(i))),
            (None, Some(x)) => Ok(Term::Number(Number::Float(x))),
            _ => Err(format!("number {n} is out of range")),
        },
        serde_json::Value::String(s) => crate::logic::parse_term(s).map_err(|e| format!("`{s}`: {e}")),
        serde_json::Value::Bool(b) => Ok(Term::atom(if *b { "true" } else { "false" })),
        other => Err(format!("unsupported value {other}")),
    }
}

fn substitute(text: &str, params: &Params) -> Result<String, SynthesisError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(at) = rest.find('$') {
        out.push_str(&rest[..at]);
        let tail = &rest[at + 1..];
        let end = tail
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(tail.len());
        let name = &tail[..end];
        let value = params
            .get(name)
            .ok_or_else(|| SynthesisError::UnresolvedParam(name.to_string()))?;
        let term = match value {
            serde_json::Value::String(s) if !is_atom_name(s) => Term::string(s),
            v => json_term(v).map_err(|e| SynthesisError::BadInstruction(format!("param `{name}`: {e}")))?,
        };
        out.push_str(&term.to_string());
        rest = &tail[end..];
    }
    out.push_str(rest);
    Ok(out)
}

fn substitute_value(v: &serde_json::Value, params: &Params) -> Result<serde_json::Value, SynthesisError> {
    match v {
        serde_json::Value::String(s) => match s.strip_prefix('$').and_then(|n| params.get(n)) {
            Some(direct) => Ok(direct.clone()),
            None => Ok(serde_json::Value::String(substitute(s, params)?)),
        },
        other => Ok(other.clone()),
    }
}

impl TaskInstruction {
    pub fn from_json(text: &str) -> Result<Self, SynthesisError> {
        serde_json::from_str(text).map_err(|e| SynthesisError::BadInstruction(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SynthesisError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SynthesisError::BadInstruction(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Replaces every `$name` with the named parameter.
    pub fn resolve_params(&self, params: &Params) -> Result<TaskInstruction, SynthesisError> {
        let mut out = self.clone();
        out.target = substitute(&self.target, params)?;
        for j in &mut out.joins {
            *j = substitute(j, params)?;
        }
        for f in &mut out.filters {
            match f {
                FilterDecl::Attribute { value, .. } => *value = substitute_value(value, params)?,
                FilterDecl::Compare { right, .. } => *right = substitute_value(right, params)?,
            }
        }
        for a in &mut out.action_bindings {
            a.params = substitute(&a.params, params)?;
            if let Some(b) = &mut a.batch {
                b.item = substitute(&b.item, params)?;
            }
        }
        Ok(out)
    }
}

pub fn load_params(path: &Path) -> Result<Params, SynthesisError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SynthesisError::BadInstruction(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| SynthesisError::BadInstruction(format!("{}: {e}", path.display())))
}
