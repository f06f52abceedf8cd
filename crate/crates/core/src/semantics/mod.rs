//! Tables to knowledge graph to ABL facts and foundational rules.

mod facts;
mod graph;
mod schema;
mod table;

use std::path::Path;

pub use facts::{kg_to_facts, schema_to_rules, FactSet};
pub use graph::{ingest_table, link_shared_values, mangle_key, value_id, KGTriple, KnowledgeGraph, Node, PendingLink};
pub use schema::{AttrType, AttributeDecl, ConstraintDecl, ConstraintKind, EntitySchema, EntityType, Relationship, Via};
pub use table::Table;

use crate::logic::ParseError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SemanticsError {
    #[error("schema: {0}")]
    Schema(String),
    #[error("unknown entity type `{0}`")]
    UnknownEntityType(String),
    #[error("table for `{entity}` has no key column `{column}`")]
    MissingKeyColumn { entity: String, column: String },
    #[error("table for `{entity}` has no column `{column}`")]
    MissingColumn { entity: String, column: String },
    #[error("row {row}: key is empty")]
    MissingKey { row: usize },
    #[error("row {row}: duplicate `{entity}` key `{key}`")]
    DuplicateKey { entity: String, key: String, row: usize },
    #[error("row {row}, column `{column}`: cannot read `{value}` as {}", expected.as_str())]
    TypeCoercion {
        row: usize,
        column: String,
        value: String,
        expected: AttrType,
    },
    #[error("node `{id}` appears with conflicting kinds")]
    ConflictingNode { id: String },
    #[error("graph: {0}")]
    Graph(String),
    #[error("`{relationship}` on `{row}` points from `{from}` to `{to}`, which is not in the graph")]
    UnresolvedLink {
        relationship: String,
        row: String,
        from: String,
        to: String,
    },
    #[error("predicate `{0}` is not declared in the schema")]
    UndeclaredPredicate(String),
    #[error("variable {var} in the head of `{rule}` is not bound by the body")]
    UnsafeTemplate { var: String, rule: String },
    #[error("fact `{0}` is not ground")]
    NonGroundFact(String),
    #[error("rule `{0}` is unsafe")]
    UnsafeRule(String),
    #[error(transparent)]
    Parse(ParseError),
    #[error("csv: {0}")]
    Csv(String),
    #[error("json: {0}")]
    Json(String),
    #[error("io: {0}")]
    Io(String),
}

/// Ingests every declared entity type from `dir/<entity>.csv` (or `.json`),
/// links the fragments and compiles facts and foundational rules.
pub fn compile_directory(schema: &EntitySchema, dir: &Path) -> Result<(KnowledgeGraph, FactSet), SemanticsError> {
    let mut fragments = Vec::new();
    for e in &schema.entity_types {
        let csv = dir.join(format!("{}.csv", e.name));
        let json = dir.join(format!("{}.json", e.name));
        let table = if csv.exists() {
            Table::from_csv_path(&csv)?
        } else if json.exists() {
            let text = std::fs::read_to_string(&json).map_err(|err| SemanticsError::Io(format!("{}: {err}", json.display())))?;
            Table::from_json(&text)?
        } else {
            return Err(SemanticsError::Io(format!("no table for `{}` in {}", e.name, dir.display())));
        };
        fragments.push(ingest_table(&table, schema, &e.name)?);
    }
    compile(schema, fragments)
}

/// Links fragments and compiles the result.
pub fn compile(schema: &EntitySchema, fragments: Vec<KnowledgeGraph>) -> Result<(KnowledgeGraph, FactSet), SemanticsError> {
    let kg = link_shared_values(fragments)?;
    let mut facts = kg_to_facts(&kg, schema)?;
    facts.foundational_rules = schema_to_rules(schema)?;
    Ok((kg, facts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{derivable, parse_term, solve_all, SolveLimits};

    const SCHEMA: &str = r#"{
      "entity_types": [
        {"name": "consumer", "key_column": "id"},
        {"name": "subscription", "key_column": "id", "attributes": [
          {"column": "status", "predicate": "has_status", "type": "enum", "values": ["active", "cancelled"]}]}
      ],
      "relationships": [
        {"name": "subscribe", "from_type": "consumer", "to_type": "subscription",
         "via": {"entity": "subscription", "column": "consumer_id"}}
      ],
      "constraints": [
        {"kind": "status_domain", "params": {"entity": "subscription", "predicate": "has_status",
          "value": "active", "rule_head": "active_subscription", "relationship": "subscribe"}},
        {"kind": "rule_template", "params": {"head": "precondition(send_promotion(C))",
          "body": "consumer(C), subscribe(C, S), active_subscription(S)"}}
      ]
    }"#;

    fn snippet() -> (EntitySchema, FactSet) {
        let schema = EntitySchema::from_json(SCHEMA).unwrap();
        let c = Table::from_csv("id\nc123\n".as_bytes()).unwrap();
        let s = Table::from_csv("id,status,consumer_id\ns456,active,c123\n".as_bytes()).unwrap();
        let frags = vec![
            ingest_table(&c, &schema, "consumer").unwrap(),
            ingest_table(&s, &schema, "subscription").unwrap(),
        ];
        let (_, facts) = compile(&schema, frags).unwrap();
        (schema, facts)
    }

    #[test]
    fn four_fact_snippet() {
        let (_, facts) = snippet();
        let text: Vec<String> = facts.facts.iter().map(|c| c.to_string()).collect();
        assert_eq!(
            text,
            ["consumer(c123).", "subscription(s456).", "subscribe(c123, s456).", "has_status(s456, active)."]
        );
    }

    #[test]
    fn foundational_rules_and_precondition() {
        let (_, facts) = snippet();
        let rules: Vec<String> = facts.foundational_rules.iter().map(|c| c.to_string().replace("\n    ", " ")).collect();
        assert_eq!(
            rules,
            [
                "active_subscription(S) :- has_status(S, active), subscribe(_, S).",
                "precondition(send_promotion(C)) :- consumer(C), subscribe(C, S), active_subscription(S).",
            ]
        );
        let p = facts.to_program();
        let goal = parse_term("precondition(send_promotion(c123))").unwrap();
        assert!(derivable(&goal, &p, SolveLimits::default()).unwrap());
        let all = solve_all(&parse_term("active_subscription(S)").unwrap(), &p, SolveLimits::default()).unwrap();
        assert_eq!(all, vec![parse_term("active_subscription(s456)").unwrap()]);
    }

    #[test]
    fn empty_inputs() {
        let schema = EntitySchema::from_json(SCHEMA).unwrap();
        let empty = kg_to_facts(&KnowledgeGraph::default(), &schema).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.declared.len(), 4);
        let bare = EntitySchema { constraints: vec![], ..schema };
        assert!(schema_to_rules(&bare).unwrap().is_empty());
    }

    #[test]
    fn unsafe_template_rejected() {
        let mut schema = EntitySchema::from_json(SCHEMA).unwrap();
        schema.constraints[1].params.insert("head".into(), "precondition(send_promotion(X))".into());
        let err = schema_to_rules(&schema).unwrap_err();
        assert!(matches!(err, SemanticsError::UnsafeTemplate { ref var, .. } if var == "X"), "{err}");
    }

    #[test]
    fn undeclared_predicate_and_dangling_links() {
        let schema = EntitySchema::from_json(SCHEMA).unwrap();
        let mut kg = KnowledgeGraph::default();
        kg.nodes.insert("c1".into(), Node::Entity { entity_type: "consumer".into() });
        kg.nodes.insert("text:x".into(), Node::Value { value_type: AttrType::Text, lexical: "x".into() });
        kg.triples.push(KGTriple { subject: "c1".into(), predicate: "likes".into(), object: "text:x".into() });
        assert_eq!(kg_to_facts(&kg, &schema), Err(SemanticsError::UndeclaredPredicate("likes".into())));

        let s = Table::from_csv("id,status,consumer_id\ns1,active,c9\n".as_bytes()).unwrap();
        let frag = ingest_table(&s, &schema, "subscription").unwrap();
        let kg = link_shared_values(vec![frag]).unwrap();
        assert!(matches!(kg_to_facts(&kg, &schema), Err(SemanticsError::UnresolvedLink { .. })));
    }

    #[test]
    fn abl_export_round_trips() {
        let (_, facts) = snippet();
        let back = FactSet::from_abl(&facts.to_abl()).unwrap();
        assert_eq!(back.facts, facts.facts);
        assert_eq!(back.foundational_rules, facts.foundational_rules);
        assert!(facts.predicates().contains(&"subscription/1".parse().unwrap()));
        assert_eq!(facts.len(), 6);
    }
}
