use std::collections::BTreeMap;
use std::sync::Mutex;

use serde_json::json;

use super::registry::{ToolHandler, ToolInvocation, ToolResult};
use super::ToolError;
use crate::logic::{is_atom_name, Clause, Number, Term};
use crate::semantics::Table;

/// Reads a table cell as a term: integers, floats, atoms, else strings.
pub fn cell_term(raw: &str) -> Term {
    let raw = raw.trim();
    if let Ok(i) = raw.parse::<i64>() {
        return Term::Number(Number::Int(i));
    }
    match raw.parse::<f64>() {
        Ok(x) if x.is_finite() => Term::Number(Number::Float(x)),
        _ if is_atom_name(raw) => Term::atom(raw),
        _ => Term::string(raw),
    }
}

/// `persist(Store, Fact)`: appends the fact to the named store of the run.
#[derive(Default)]
pub struct PersistHandler {
    stores: Mutex<BTreeMap<(String, String), Vec<Clause>>>,
}

impl PersistHandler {
    pub fn new() -> Self {
        PersistHandler::default()
    }

    pub fn stored(&self, run_id: &str, store: &str) -> Vec<Clause> {
        self.stores
            .lock()
            .expect("store lock")
            .get(&(run_id.to_string(), store.to_string()))
            .cloned()
            .unwrap_or_default()
    }
}

impl ToolHandler for PersistHandler {
    fn call(&self, inv: &ToolInvocation) -> Result<ToolResult, ToolError> {
        let bad = || ToolError::Failed {
            tool: inv.tool.clone(),
            message: format!("expected persist(Store, Fact), got `{}`", inv.params),
        };
        let [store, fact] = inv.params.args() else { return Err(bad()) };
        let (Some(store), true) = (store.as_atom(), fact.is_callable()) else { return Err(bad()) };
        let clause = Clause::fact(fact.clone());
        self.stores
            .lock()
            .expect("store lock")
            .entry((inv.run_id.clone(), store.to_string()))
            .or_default()
            .push(clause.clone());
        Ok(ToolResult::ok(vec![clause], json!({ "store": store, "fact": fact.to_string() })))
    }

    fn records(&self) -> Vec<serde_json::Value> {
        self.stores
            .lock()
            .expect("store lock")
            .iter()
            .flat_map(|((run, store), facts)| {
                facts
                    .iter()
                    .map(move |f| json!({ "run_id": run, "store": store, "fact": f.to_string() }))
            })
            .collect()
    }
}

/// A committed lookup table standing in for an external data source. Rows
/// whose leading input columns equal the params become facts.
pub struct FixtureHandler {
    predicate: String,
    inputs: usize,
    rows: Vec<Vec<Term>>,
}

impl FixtureHandler {
    pub fn new(predicate: &str, inputs: usize, rows: Vec<Vec<Term>>) -> Self {
        FixtureHandler {
            predicate: predicate.to_string(),
            inputs,
            rows,
        }
    }

    /// Builds rows from the named table columns, in argument order.
    pub fn from_table(predicate: &str, inputs: usize, table: &Table, columns: &[String]) -> Result<Self, ToolError> {
        let idx: Vec<usize> = columns
            .iter()
            .map(|c| {
                table
                    .column(c)
                    .ok_or_else(|| ToolError::Config(format!("fixture for `{predicate}` has no column `{c}`")))
            })
            .collect::<Result<_, _>>()?;
        let mut rows = Vec::with_capacity(table.rows.len());
        for r in 0..table.rows.len() {
            let row: Option<Vec<Term>> = idx.iter().map(|&c| table.cell(r, c).map(cell_term)).collect();
            rows.extend(row);
        }
        Ok(FixtureHandler::new(predicate, inputs, rows))
    }
}

impl ToolHandler for FixtureHandler {
    fn call(&self, inv: &ToolInvocation) -> Result<ToolResult, ToolError> {
        let inputs: Vec<Term> = match (&inv.params, self.inputs) {
            (Term::List(items, _), n) if n != 1 => items.to_vec(),
            (single, _) => vec![single.clone()],
        };
        if inputs.len() != self.inputs {
            return Err(ToolError::Failed {
                tool: inv.tool.clone(),
                message: format!("expected {} input(s), got `{}`", self.inputs, inv.params),
            });
        }
        let facts = self
            .rows
            .iter()
            .filter(|row| row[..self.inputs] == inputs[..])
            .map(|row| Clause::fact(Term::compound(&self.predicate, row.clone())))
            .collect::<Vec<_>>();
        let receipt = json!({ "rows": facts.len() });
        Ok(ToolResult::ok(facts, receipt))
    }
}

/// Records every call and answers with a receipt listing the recipients:
/// list elements of the params (or of its first list argument), else the
/// params itself.
#[derive(Default)]
pub struct RecorderHandler {
    sent: Mutex<Vec<serde_json::Value>>,
}

impl RecorderHandler {
    pub fn new() -> Self {
        RecorderHandler::default()
    }
}

pub fn recipients(params: &Term) -> Vec<String> {
    let list = match params {
        Term::List(items, _) => Some(items.to_vec()),
        Term::Atom(a) if &**a == crate::logic::NIL => Some(Vec::new()),
        t => t.args().iter().find_map(|a| match a {
            Term::List(items, _) => Some(items.to_vec()),
            Term::Atom(n) if &**n == crate::logic::NIL => Some(Vec::new()),
            _ => None,
        }),
    };
    match list {
        Some(items) => items.iter().map(Term::to_string).collect(),
        None => vec![params.to_string()],
    }
}

impl ToolHandler for RecorderHandler {
    fn call(&self, inv: &ToolInvocation) -> Result<ToolResult, ToolError> {
        let mut sent = self.sent.lock().expect("recorder lock");
        let receipt = json!({
            "tool": inv.tool,
            "sequence": sent.len() + 1,
            "idempotency_key": inv.idempotency_key,
            "recipients": recipients(&inv.params),
        });
        sent.push(json!({
            "run_id": inv.run_id,
            "task_id": inv.task_id,
            "params": inv.params.to_string(),
            "receipt": receipt,
        }));
        Ok(ToolResult::ok(Vec::new(), receipt))
    }

    fn records(&self) -> Vec<serde_json::Value> {
        self.sent.lock().expect("recorder lock").clone()
    }
}
