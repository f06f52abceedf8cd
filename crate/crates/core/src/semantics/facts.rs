use std::collections::BTreeSet;
use std::fmt::Write;
use std::path::Path;

use super::graph::{KnowledgeGraph, Node};
use super::schema::{AttrType, ConstraintKind, EntitySchema};
use super::SemanticsError;
use crate::logic::{
    is_atom_name, parse_body, parse_program, parse_term, Clause, Literal, Number, PartitionTag, PredicateKey, Program,
    Term,
};

/// Ground facts plus the rules that give them domain meaning.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FactSet {
    pub facts: Vec<Clause>,
    pub foundational_rules: Vec<Clause>,
    /// Predicates the schema declares, whether or not any fact uses them.
    pub declared: BTreeSet<PredicateKey>,
}

impl FactSet {
    pub fn new(facts: Vec<Clause>, foundational_rules: Vec<Clause>) -> Result<Self, SemanticsError> {
        if let Some(f) = facts.iter().find(|f| !f.is_ground_fact()) {
            return Err(SemanticsError::NonGroundFact(f.to_string()));
        }
        if let Some(r) = foundational_rules.iter().find(|r| r.unbound_head_var().is_some() || r.unsafe_negation().is_some()) {
            return Err(SemanticsError::UnsafeRule(r.to_string()));
        }
        Ok(FactSet {
            facts,
            foundational_rules,
            declared: BTreeSet::new(),
        })
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty() && self.foundational_rules.is_empty()
    }

    pub fn len(&self) -> usize {
        self.facts.len() + self.foundational_rules.len()
    }

    /// Facts followed by rules, all in the facts section.
    pub fn to_program(&self) -> Program {
        Program::from_tagged(
            self.facts
                .iter()
                .chain(&self.foundational_rules)
                .map(|c| (PartitionTag::Facts, c.clone())),
        )
    }

    /// Predicates with a fact, a rule or a schema declaration.
    pub fn predicates(&self) -> BTreeSet<PredicateKey> {
        let mut out = self.declared.clone();
        out.extend(self.facts.iter().chain(&self.foundational_rules).map(Clause::key));
        out
    }

    pub fn merged<'a>(sets: impl IntoIterator<Item = &'a FactSet>) -> FactSet {
        let mut out = FactSet::default();
        for s in sets {
            out.facts.extend(s.facts.iter().cloned());
            out.foundational_rules.extend(s.foundational_rules.iter().cloned());
            out.declared.extend(s.declared.iter().cloned());
        }
        out
    }

    pub fn to_abl(&self) -> String {
        let mut out = String::from("% SECTION: facts\n");
        for c in self.facts.iter().chain(&self.foundational_rules) {
            writeln!(out, "{c}").expect("string write");
        }
        out
    }

    pub fn export_abl(&self, path: &Path) -> Result<(), SemanticsError> {
        std::fs::write(path, self.to_abl()).map_err(|e| SemanticsError::Io(format!("{}: {e}", path.display())))
    }

    /// Reads an `.abl` file; ground facts go to `facts`, everything else to rules.
    pub fn from_abl(text: &str) -> Result<Self, SemanticsError> {
        let program = parse_program(text).map_err(SemanticsError::Parse)?;
        let (facts, rules) = program.clauses().iter().cloned().partition(Clause::is_ground_fact);
        FactSet::new(facts, rules)
    }
}

pub(crate) fn value_term(value_type: AttrType, lexical: &str) -> Term {
    match value_type {
        AttrType::Number => match lexical.parse::<i64>() {
            Ok(i) => Term::Number(Number::Int(i)),
            Err(_) => Term::Number(Number::Float(lexical.parse().expect("canonical number"))),
        },
        _ if is_atom_name(lexical) => Term::atom(lexical),
        _ => Term::string(lexical),
    }
}

/// One unary fact per entity node, then relationship facts, then attribute
/// facts, each group in graph order.
pub fn kg_to_facts(kg: &KnowledgeGraph, schema: &EntitySchema) -> Result<FactSet, SemanticsError> {
    kg.validate()?;
    if let Some(link) = kg.pending.first() {
        return Err(SemanticsError::UnresolvedLink {
            relationship: link.relationship.clone(),
            row: link.row.clone(),
            from: link.from.clone(),
            to: link.to.clone(),
        });
    }
    let mut facts = Vec::with_capacity(kg.nodes.len() + kg.triples.len());
    for (id, node) in &kg.nodes {
        if let Node::Entity { entity_type } = node {
            if schema.entity(entity_type).is_none() {
                return Err(SemanticsError::UndeclaredPredicate(entity_type.clone()));
            }
            facts.push(Clause::fact(Term::compound(entity_type, vec![Term::atom(id)])));
        }
    }
    let mut attribute_facts = Vec::new();
    for t in &kg.triples {
        let object = &kg.nodes[&t.object];
        match object {
            Node::Entity { .. } => {
                if schema.relationship(&t.predicate).is_none() {
                    return Err(SemanticsError::UndeclaredPredicate(t.predicate.clone()));
                }
                facts.push(Clause::fact(Term::compound(&t.predicate, vec![Term::atom(&t.subject), Term::atom(&t.object)])));
            }
            Node::Value { value_type, lexical } => {
                let declared = schema
                    .entity_types
                    .iter()
                    .flat_map(|e| &e.attributes)
                    .any(|a| a.predicate() == t.predicate);
                if !declared {
                    return Err(SemanticsError::UndeclaredPredicate(t.predicate.clone()));
                }
                attribute_facts.push(Clause::fact(Term::compound(
                    &t.predicate,
                    vec![Term::atom(&t.subject), value_term(*value_type, lexical)],
                )));
            }
        }
    }
    facts.extend(attribute_facts);
    Ok(FactSet {
        facts,
        foundational_rules: Vec::new(),
        declared: declared_predicates(schema),
    })
}

fn declared_predicates(schema: &EntitySchema) -> BTreeSet<PredicateKey> {
    let mut out = BTreeSet::new();
    for e in &schema.entity_types {
        out.insert(PredicateKey::new(&e.name, 1));
        out.extend(e.attributes.iter().map(|a| PredicateKey::new(a.predicate(), 2)));
    }
    out.extend(schema.relationships.iter().map(|r| PredicateKey::new(&r.name, 2)));
    out
}

fn var_for(entity: &str) -> String {
    entity
        .chars()
        .next()
        .map(|c| c.to_ascii_uppercase().to_string())
        .unwrap_or_else(|| "X".into())
}

/// Compiles schema constraints into foundational rules, in declaration order.
pub fn schema_to_rules(schema: &EntitySchema) -> Result<Vec<Clause>, SemanticsError> {
    let mut rules = Vec::new();
    for c in &schema.constraints {
        let clause = match c.kind {
            ConstraintKind::StatusDomain => {
                let entity = c.param("entity")?;
                let predicate = c.param("predicate")?;
                let value = c.param("value")?;
                let head = c.params.get("rule_head").cloned().unwrap_or_else(|| format!("{value}_{entity}"));
                let x = Term::var(&var_for(entity));
                let mut body = vec![Literal::pos(Term::compound(predicate, vec![x.clone(), value_term(AttrType::Enum, value)]))];
                if let Some(rel) = c.params.get("relationship") {
                    let r = schema
                        .relationship(rel)
                        .ok_or_else(|| SemanticsError::Schema(format!("unknown relationship `{rel}`")))?;
                    let args = if r.to_type == entity { vec![Term::var("_"), x.clone()] } else { vec![x.clone(), Term::var("_")] };
                    body.push(Literal::pos(Term::compound(rel, args)));
                }
                Clause::new(Term::compound(&head, vec![x]), body)
            }
            ConstraintKind::RequiredRelationship => {
                let entity = c.param("entity")?;
                let rel = c.param("relationship")?;
                let r = schema
                    .relationship(rel)
                    .ok_or_else(|| SemanticsError::Schema(format!("unknown relationship `{rel}`")))?;
                let head = c.params.get("rule_head").cloned().unwrap_or_else(|| format!("linked_{entity}"));
                let x = Term::var(&var_for(entity));
                let args = if r.to_type == entity { vec![Term::var("_"), x.clone()] } else { vec![x.clone(), Term::var("_")] };
                Clause::new(
                    Term::compound(&head, vec![x.clone()]),
                    vec![
                        Literal::pos(Term::compound(entity, vec![x])),
                        Literal::pos(Term::compound(rel, args)),
                    ],
                )
            }
            ConstraintKind::RuleTemplate => {
                let head = parse_term(c.param("head")?).map_err(SemanticsError::Parse)?;
                let body = parse_body(c.param("body")?).map_err(SemanticsError::Parse)?;
                if !head.is_callable() {
                    return Err(SemanticsError::Schema(format!("rule head `{head}` is not callable")));
                }
                Clause::new(head, body)
            }
        };
        if let Some(v) = clause.unbound_head_var() {
            return Err(SemanticsError::UnsafeTemplate {
                var: v.name.to_string(),
                rule: clause.to_string(),
            });
        }
        if let Some(v) = clause.unsafe_negation() {
            return Err(SemanticsError::UnsafeTemplate {
                var: v.name.to_string(),
                rule: clause.to_string(),
            });
        }
        rules.push(clause);
    }
    Ok(rules)
}
