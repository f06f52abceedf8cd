use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::logic::PredicateKey;

/// One coded validation finding.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub code: String,
    pub message: String,
    /// Where the finding applies: a task id, or `section:index` for program clauses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
}

impl Finding {
    pub fn new(code: &str, message: impl Into<String>, location: Option<String>) -> Self {
        Finding {
            code: code.to_string(),
            message: message.into(),
            location,
        }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.location {
            Some(loc) => write!(f, "{} at {loc}: {}", self.code, self.message),
            None => write!(f, "{}: {}", self.code, self.message),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Finding>,
    pub warnings: Vec<Finding>,
    /// Predicates no clause defines but a grounding tool can produce.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub tool_grounded: BTreeSet<PredicateKey>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn error(&mut self, code: &str, message: impl Into<String>, location: Option<String>) {
        self.errors.push(Finding::new(code, message, location));
    }

    pub fn warn(&mut self, code: &str, message: impl Into<String>, location: Option<String>) {
        self.warnings.push(Finding::new(code, message, location));
    }

    pub fn has_error(&self, code: &str) -> bool {
        self.errors.iter().any(|f| f.code == code)
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.errors.extend(other.errors);
        self.warnings.extend(other.warnings);
        self.tool_grounded.extend(other.tool_grounded);
    }
}
