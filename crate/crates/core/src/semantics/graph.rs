use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::schema::{AttrType, EntitySchema};
use super::table::Table;
use super::SemanticsError;
use crate::logic::{is_atom_name, Number};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Entity { entity_type: String },
    Value { value_type: AttrType, lexical: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KGTriple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

/// A foreign-key cell waiting for the referenced entity to be merged in.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingLink {
    pub relationship: String,
    pub from: String,
    pub to: String,
    /// Node id of the row that carried the reference; used in error messages.
    pub row: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeGraph {
    pub nodes: IndexMap<String, Node>,
    pub triples: Vec<KGTriple>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pending: Vec<PendingLink>,
}

impl fmt::Display for KGTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.subject, self.predicate, self.object)
    }
}

/// Id of the canonical node for a typed value.
pub fn value_id(value_type: AttrType, lexical: &str) -> String {
    format!("{}:{lexical}", value_type.as_str())
}

/// Turns a raw key into an atom-shaped identifier.
pub fn mangle_key(raw: &str, entity_type: &str) -> String {
    let lower = raw.trim().to_lowercase();
    if is_atom_name(&lower) {
        return lower;
    }
    let initial = entity_type.chars().next().unwrap_or('k').to_ascii_lowercase();
    let body: String = lower
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    let id = format!("{initial}{body}");
    if is_atom_name(&id) {
        id
    } else {
        format!("k{id}")
    }
}

/// Canonical lexical form of a number cell: integers stay integral,
/// everything else goes through the float printer.
fn canonical_number(raw: &str) -> Option<String> {
    let raw = raw.trim();
    if let Ok(i) = raw.parse::<i64>() {
        return Some(Number::Int(i).to_string());
    }
    match raw.parse::<f64>() {
        Ok(x) if x.is_finite() => Some(Number::Float(x).to_string()),
        _ => None,
    }
}

impl KnowledgeGraph {
    pub fn entity_count(&self) -> usize {
        self.nodes.values().filter(|n| matches!(n, Node::Entity { .. })).count()
    }

    pub fn value_count(&self) -> usize {
        self.nodes.len() - self.entity_count()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.triples.is_empty()
    }

    fn add_node(&mut self, id: String, node: Node) -> Result<(), SemanticsError> {
        match self.nodes.get(&id) {
            Some(existing) if *existing != node => Err(SemanticsError::ConflictingNode { id }),
            Some(_) => Ok(()),
            None => {
                self.nodes.insert(id, node);
                Ok(())
            }
        }
    }

    /// Structural checks: every triple endpoint exists and predicates are nonempty.
    pub fn validate(&self) -> Result<(), SemanticsError> {
        for t in &self.triples {
            if t.predicate.is_empty() {
                return Err(SemanticsError::Graph(format!("triple {t} has an empty predicate")));
            }
            for end in [&t.subject, &t.object] {
                if !self.nodes.contains_key(end) {
                    return Err(SemanticsError::Graph(format!("triple {t} references missing node `{end}`")));
                }
            }
        }
        Ok(())
    }
}

/// Builds the star fragment for one entity table: a node per row, a value
/// node per distinct typed cell and a triple per non-null attribute.
pub fn ingest_table(rows: &Table, schema: &EntitySchema, entity_type: &str) -> Result<KnowledgeGraph, SemanticsError> {
    let entity = schema
        .entity(entity_type)
        .ok_or_else(|| SemanticsError::UnknownEntityType(entity_type.to_string()))?;
    let key_col = rows.column(&entity.key_column).ok_or_else(|| SemanticsError::MissingKeyColumn {
        entity: entity_type.to_string(),
        column: entity.key_column.clone(),
    })?;
    let attrs: Vec<_> = entity
        .attributes
        .iter()
        .map(|a| (a, rows.column(&a.column)))
        .collect();
    if let Some((a, _)) = attrs.iter().find(|(_, c)| c.is_none()) {
        return Err(SemanticsError::MissingColumn {
            entity: entity_type.to_string(),
            column: a.column.clone(),
        });
    }
    let links: Vec<_> = schema
        .relationships
        .iter()
        .filter(|r| r.via.entity == entity_type)
        .map(|r| {
            rows.column(&r.via.column)
                .map(|c| (r, c))
                .ok_or_else(|| SemanticsError::MissingColumn {
                    entity: entity_type.to_string(),
                    column: r.via.column.clone(),
                })
        })
        .collect::<Result<_, _>>()?;

    let mut kg = KnowledgeGraph::default();
    for row in 0..rows.rows.len() {
        let line = row + 1;
        let raw_key = rows.cell(row, key_col).ok_or(SemanticsError::MissingKey { row: line })?;
        let id = mangle_key(raw_key, entity_type);
        if kg.nodes.contains_key(&id) {
            return Err(SemanticsError::DuplicateKey {
                entity: entity_type.to_string(),
                key: raw_key.to_string(),
                row: line,
            });
        }
        kg.add_node(id.clone(), Node::Entity { entity_type: entity_type.to_string() })?;
        for (attr, col) in &attrs {
            let Some(raw) = rows.cell(row, col.expect("checked")) else { continue };
            let coercion = || SemanticsError::TypeCoercion {
                row: line,
                column: attr.column.clone(),
                value: raw.to_string(),
                expected: attr.kind,
            };
            let lexical = match attr.kind {
                AttrType::Number => canonical_number(raw).ok_or_else(coercion)?,
                AttrType::Enum => {
                    if !attr.values.is_empty() && !attr.values.iter().any(|v| v == raw) {
                        return Err(coercion());
                    }
                    raw.to_string()
                }
                AttrType::Id => mangle_key(raw, attr.references.as_deref().unwrap_or(entity_type)),
                AttrType::Text => raw.to_string(),
            };
            let vid = value_id(attr.kind, &lexical);
            kg.add_node(vid.clone(), Node::Value { value_type: attr.kind, lexical })?;
            kg.triples.push(KGTriple {
                subject: id.clone(),
                predicate: attr.predicate().to_string(),
                object: vid,
            });
        }
        for (rel, col) in &links {
            let Some(raw) = rows.cell(row, *col) else { continue };
            let (from, to) = if rel.via.entity == rel.to_type {
                (mangle_key(raw, &rel.from_type), id.clone())
            } else {
                (id.clone(), mangle_key(raw, &rel.to_type))
            };
            kg.pending.push(PendingLink {
                relationship: rel.name.clone(),
                from,
                to,
                row: id.clone(),
            });
        }
    }
    Ok(kg)
}

/// Merges fragments. Value nodes unify by canonical id; foreign-key cells
/// whose endpoints are both present become relationship triples.
pub fn link_shared_values(fragments: Vec<KnowledgeGraph>) -> Result<KnowledgeGraph, SemanticsError> {
    let mut merged = KnowledgeGraph::default();
    let mut pending = Vec::new();
    for frag in fragments {
        for (id, node) in frag.nodes {
            merged.add_node(id, node)?;
        }
        merged.triples.extend(frag.triples);
        pending.extend(frag.pending);
    }
    for link in pending {
        let present = |id: &str| matches!(merged.nodes.get(id), Some(Node::Entity { .. }));
        if present(&link.from) && present(&link.to) {
            merged.triples.push(KGTriple {
                subject: link.from,
                predicate: link.relationship,
                object: link.to,
            });
        } else {
            merged.pending.push(link);
        }
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> EntitySchema {
        EntitySchema::from_json(
            r#"{
              "entity_types": [
                {"name": "consumer", "key_column": "id", "attributes": [
                  {"column": "city", "predicate": "resides_in", "type": "text"},
                  {"column": "income", "predicate": "household_income", "type": "number"}]},
                {"name": "subscription", "key_column": "id", "attributes": [
                  {"column": "status", "predicate": "has_status", "type": "enum", "values": ["active", "cancelled"]}]}
              ],
              "relationships": [
                {"name": "subscribe", "from_type": "consumer", "to_type": "subscription",
                 "via": {"entity": "subscription", "column": "consumer_id"}}
              ]
            }"#,
        )
        .unwrap()
    }

    fn table(csv: &str) -> Table {
        Table::from_csv(csv.as_bytes()).unwrap()
    }

    #[test]
    fn single_row_star() {
        let kg = ingest_table(&table("id,city,income\nc123,rivertown,\n"), &schema(), "consumer").unwrap();
        assert_eq!(kg.entity_count(), 1);
        assert_eq!(kg.triples.len(), 1);
        let t = &kg.triples[0];
        assert_eq!((t.subject.as_str(), t.predicate.as_str()), ("c123", "resides_in"));
        assert_eq!(
            kg.nodes[&t.object],
            Node::Value { value_type: AttrType::Text, lexical: "rivertown".into() }
        );
    }

    #[test]
    fn zero_rows() {
        let kg = ingest_table(&table("id,city,income\n"), &schema(), "consumer").unwrap();
        assert!(kg.is_empty());
    }

    #[test]
    fn values_are_canonical() {
        let kg = ingest_table(&table("id,city,income\nc1,x,12.50\nc2,x,12.5\nc3,y,7\n"), &schema(), "consumer").unwrap();
        assert_eq!(kg.value_count(), 4);
        assert!(kg.nodes.contains_key("number:12.5"));
        assert!(kg.nodes.contains_key("number:7"));
    }

    #[test]
    fn ingest_errors() {
        let s = schema();
        let dup = ingest_table(&table("id,city,income\nc1,x,1\nC1,y,2\n"), &s, "consumer");
        assert!(matches!(dup, Err(SemanticsError::DuplicateKey { row: 2, .. })));
        let nokey = ingest_table(&table("ident,city,income\n"), &s, "consumer");
        assert!(matches!(nokey, Err(SemanticsError::MissingKeyColumn { .. })));
        let bad = ingest_table(&table("id,city,income\nc1,x,lots\n"), &s, "consumer").unwrap_err();
        assert_eq!(bad.to_string(), "row 1, column `income`: cannot read `lots` as number");
        let bad_enum = ingest_table(&table("id,status,consumer_id\ns1,paused,c1\n"), &s, "subscription");
        assert!(matches!(bad_enum, Err(SemanticsError::TypeCoercion { .. })));
    }

    #[test]
    fn keys_are_mangled_only_when_needed() {
        assert_eq!(mangle_key("c123", "consumer"), "c123");
        assert_eq!(mangle_key("C123", "consumer"), "c123");
        assert_eq!(mangle_key("123", "consumer"), "c123");
        assert_eq!(mangle_key("S-456", "subscription"), "ss_456");
    }

    #[test]
    fn linking_materializes_relationships() {
        let s = schema();
        let c = ingest_table(&table("id,city,income\nc123,rivertown,50000\n"), &s, "consumer").unwrap();
        let sub = ingest_table(&table("id,status,consumer_id\ns456,active,c123\n"), &s, "subscription").unwrap();
        assert_eq!(link_shared_values(vec![c.clone()]).unwrap(), c);
        let kg = link_shared_values(vec![c, sub]).unwrap();
        assert!(kg.pending.is_empty());
        assert!(kg
            .triples
            .contains(&KGTriple { subject: "c123".into(), predicate: "subscribe".into(), object: "s456".into() }));
        kg.validate().unwrap();
    }

    #[test]
    fn conflicting_kinds() {
        let mut a = KnowledgeGraph::default();
        a.nodes.insert("x".into(), Node::Entity { entity_type: "consumer".into() });
        let mut b = KnowledgeGraph::default();
        b.nodes.insert("x".into(), Node::Entity { entity_type: "subscription".into() });
        assert!(matches!(link_shared_values(vec![a, b]), Err(SemanticsError::ConflictingNode { .. })));
    }
}
