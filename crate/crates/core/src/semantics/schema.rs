use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SemanticsError;
use crate::logic::is_atom_name;

/// Declared shape of the enterprise data: entity tables, the relationships
/// between them and the constraints that become foundational rules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntitySchema {
    pub entity_types: Vec<EntityType>,
    #[serde(default)]
    pub relationships: Vec<Relationship>,
    #[serde(default)]
    pub constraints: Vec<ConstraintDecl>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityType {
    pub name: String,
    pub key_column: String,
    #[serde(default)]
    pub attributes: Vec<AttributeDecl>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrType {
    Id,
    Number,
    Text,
    Enum,
}

impl AttrType {
    pub fn as_str(self) -> &'static str {
        match self {
            AttrType::Id => "id",
            AttrType::Number => "number",
            AttrType::Text => "text",
            AttrType::Enum => "enum",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeDecl {
    pub column: String,
    /// Fact predicate; defaults to the column name.
    #[serde(default)]
    pub predicate: Option<String>,
    #[serde(rename = "type")]
    pub kind: AttrType,
    /// Allowed values for `enum` columns.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<String>,
    /// Entity type an `id` column points at; drives key mangling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub references: Option<String>,
}

impl AttributeDecl {
    pub fn predicate(&self) -> &str {
        self.predicate.as_deref().unwrap_or(&self.column)
    }
}

/// A binary relationship materialized from a foreign-key column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Relationship {
    pub name: String,
    pub from_type: String,
    pub to_type: String,
    pub via: Via,
}

/// The table (`entity`) and column holding the other endpoint's key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Via {
    pub entity: String,
    pub column: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    StatusDomain,
    RequiredRelationship,
    RuleTemplate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintDecl {
    pub kind: ConstraintKind,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

impl ConstraintDecl {
    pub(crate) fn param(&self, name: &str) -> Result<&str, SemanticsError> {
        self.params
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| SemanticsError::Schema(format!("{:?} constraint is missing `{name}`", self.kind)))
    }
}

impl EntitySchema {
    pub fn from_json(text: &str) -> Result<Self, SemanticsError> {
        let schema: EntitySchema = serde_json::from_str(text).map_err(|e| SemanticsError::Json(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self, SemanticsError> {
        let text = std::fs::read_to_string(path).map_err(|e| SemanticsError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn entity(&self, name: &str) -> Option<&EntityType> {
        self.entity_types.iter().find(|e| e.name == name)
    }

    pub fn relationship(&self, name: &str) -> Option<&Relationship> {
        self.relationships.iter().find(|r| r.name == name)
    }

    /// Checks names, references and relationship endpoints.
    pub fn validate(&self) -> Result<(), SemanticsError> {
        let mut names = HashSet::new();
        for e in &self.entity_types {
            if !is_atom_name(&e.name) {
                return Err(SemanticsError::Schema(format!("entity type `{}` is not a valid predicate name", e.name)));
            }
            if !names.insert(e.name.as_str()) {
                return Err(SemanticsError::Schema(format!("entity type `{}` declared twice", e.name)));
            }
            let mut columns = HashSet::new();
            for a in &e.attributes {
                if !columns.insert(a.column.as_str()) || a.column == e.key_column {
                    return Err(SemanticsError::Schema(format!("column `{}` declared twice on `{}`", a.column, e.name)));
                }
                if !is_atom_name(a.predicate()) {
                    return Err(SemanticsError::Schema(format!("attribute predicate `{}` is not a valid name", a.predicate())));
                }
            }
        }
        for a in self.entity_types.iter().flat_map(|e| &e.attributes) {
            if let Some(r) = &a.references {
                if !names.contains(r.as_str()) {
                    return Err(SemanticsError::Schema(format!("column `{}` references unknown entity `{r}`", a.column)));
                }
            }
        }
        for r in &self.relationships {
            if !is_atom_name(&r.name) {
                return Err(SemanticsError::Schema(format!("relationship `{}` is not a valid predicate name", r.name)));
            }
            for end in [&r.from_type, &r.to_type] {
                if !names.contains(end.as_str()) {
                    return Err(SemanticsError::Schema(format!("relationship `{}` references unknown entity `{end}`", r.name)));
                }
            }
            if r.via.entity != r.from_type && r.via.entity != r.to_type {
                return Err(SemanticsError::Schema(format!(
                    "relationship `{}` must be carried by `{}` or `{}`",
                    r.name, r.from_type, r.to_type
                )));
            }
        }
        Ok(())
    }
}
