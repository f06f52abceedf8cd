use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::logic::PredicateKey;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    /// Produces facts for a predicate.
    Grounding,
    /// Performs a side effect.
    Action,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Impact {
    #[default]
    Normal,
    High,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    #[default]
    InProcess,
    Http,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub name: String,
    pub kind: ToolKind,
    /// Grounding tools: the predicate produced. Action tools: the functor
    /// and arity params must have; absent means any shape.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<PredicateKey>,
    /// Grounding tools: how many leading arguments are inputs. Defaults to
    /// all but the last.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inputs: Option<usize>,
    #[serde(default)]
    pub impact: Impact,
    #[serde(default)]
    pub transport: Transport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub idempotent: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
}

impl ToolDescriptor {
    fn base(name: &str, kind: ToolKind, signature: Option<PredicateKey>) -> Self {
        ToolDescriptor {
            name: name.to_string(),
            kind,
            signature,
            inputs: None,
            impact: Impact::Normal,
            transport: Transport::InProcess,
            endpoint: None,
            idempotent: kind == ToolKind::Grounding,
            description: String::new(),
        }
    }

    pub fn grounding(name: &str, produces: PredicateKey) -> Self {
        ToolDescriptor::base(name, ToolKind::Grounding, Some(produces))
    }

    pub fn action(name: &str, params: Option<PredicateKey>) -> Self {
        ToolDescriptor::base(name, ToolKind::Action, params)
    }

    pub fn high_impact(mut self) -> Self {
        self.impact = Impact::High;
        self
    }

    pub fn idempotent(mut self, yes: bool) -> Self {
        self.idempotent = yes;
        self
    }

    pub fn is_high_impact(&self) -> bool {
        self.impact == Impact::High
    }

    pub fn input_count(&self) -> usize {
        self.inputs
            .unwrap_or_else(|| self.signature.as_ref().map_or(0, |s| s.arity.saturating_sub(1)))
    }

    pub fn produces(&self) -> Option<&PredicateKey> {
        match self.kind {
            ToolKind::Grounding => self.signature.as_ref(),
            ToolKind::Action => None,
        }
    }
}

/// The registered tools as seen by synthesis and validation.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Catalog {
    pub tools: Vec<ToolDescriptor>,
}

impl Catalog {
    pub fn get(&self, name: &str) -> Option<&ToolDescriptor> {
        self.tools.iter().find(|t| t.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    /// The first grounding tool producing `key`.
    pub fn producer(&self, key: &PredicateKey) -> Option<&ToolDescriptor> {
        self.tools.iter().find(|t| t.produces() == Some(key))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tools.iter().map(|t| t.name.as_str())
    }

    /// One line per tool, in registration order.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for t in &self.tools {
            let kind = match t.kind {
                ToolKind::Grounding => "grounding",
                ToolKind::Action => "action",
            };
            write!(out, "{} [{kind}", t.name).expect("string write");
            if let Some(sig) = &t.signature {
                write!(out, " {sig}").expect("string write");
            }
            if t.is_high_impact() {
                out.push_str(" high-impact");
            }
            if t.idempotent {
                out.push_str(" idempotent");
            }
            out.push(']');
            if !t.description.is_empty() {
                write!(out, " {}", t.description).expect("string write");
            }
            out.push('\n');
        }
        out
    }
}
