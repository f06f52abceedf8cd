use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use super::BundleError;
use crate::initiative::{validate_initiative, Initiative, InitiativeContext, InitiativeSpec};
use crate::logic::{parse_body, parse_program, parse_term, Clause, PredicateKey};
use crate::report::ValidationReport;
use crate::semantics::{compile_directory, EntitySchema, FactSet, Table};
use crate::synthesis::{FilterDecl, Params, TaskInstruction};
use crate::tools::{build_registry, read_fixture, Catalog, HandlerSpec, ToolConfig, ToolError, ToolRegistry, ToolsFile};

/// Everything needed to run one initiative: schema and data, the
/// initiative, one instruction per task, parameters, tools and metrics.
#[derive(Clone, Debug)]
pub struct Bundle {
    pub root: PathBuf,
    pub schema: EntitySchema,
    pub facts: FactSet,
    pub spec: InitiativeSpec,
    pub initiative: Initiative,
    /// Instructions with parameters already substituted.
    pub instructions: BTreeMap<String, TaskInstruction>,
    pub params: Params,
    pub tools: Vec<ToolConfig>,
    pub fixtures: BTreeMap<String, Table>,
    /// Metric facts such as `customer_satisfaction(i1, 4.2).`
    pub metrics: Vec<Clause>,
    /// Predicates each task can leave behind.
    pub products: BTreeMap<String, BTreeSet<PredicateKey>>,
}

fn read(path: &Path) -> Result<String, BundleError> {
    std::fs::read_to_string(path).map_err(|e| BundleError::Io(format!("{}: {e}", path.display())))
}

fn read_optional(path: &Path) -> Result<Option<String>, BundleError> {
    if path.exists() {
        read(path).map(Some)
    } else {
        Ok(None)
    }
}

impl Bundle {
    /// Loads and validates a bundle directory. Content problems come back
    /// as `BundleError::Invalid` with the full report.
    pub fn load(dir: &Path) -> Result<Bundle, BundleError> {
        match check_bundle(dir)? {
            (Some(b), _) => Ok(b),
            (None, report) => Err(BundleError::Invalid(report)),
        }
    }

    pub fn catalog(&self) -> Catalog {
        Catalog {
            tools: self.tools.iter().map(|t| t.descriptor.clone()).collect(),
        }
    }

    /// Fresh handlers, caches and counters for one run.
    pub fn registry(&self) -> Result<ToolRegistry, ToolError> {
        build_registry(&self.tools, &|path| {
            self.fixtures
                .get(path)
                .cloned()
                .ok_or_else(|| ToolError::Config(format!("fixture `{path}` is not loaded")))
        })
    }

    pub fn id(&self) -> &str {
        &self.initiative.id
    }
}

/// Predicates each task can leave behind: persisted facts and postconditions.
fn task_products(spec: &InitiativeSpec, instructions: &BTreeMap<String, TaskInstruction>) -> BTreeMap<String, BTreeSet<PredicateKey>> {
    let mut out: BTreeMap<String, BTreeSet<PredicateKey>> = BTreeMap::new();
    for t in &spec.tasks {
        let entry = out.entry(t.id.clone()).or_default();
        for p in &t.postconditions {
            if let Some(k) = parse_term(p).ok().as_ref().and_then(PredicateKey::of) {
                entry.insert(k);
            }
        }
        entry.insert(PredicateKey::new("task_done", 1));
        for a in instructions.get(&t.id).map(|i| i.action_bindings.as_slice()).unwrap_or_default() {
            if a.tool == "persist" {
                if let Some(k) = parse_term(&a.params).ok().as_ref().and_then(PredicateKey::of) {
                    entry.insert(k);
                }
            }
        }
    }
    out
}

/// Checks an instruction against what the schema, tools and other tasks provide.
pub fn check_instruction(
    instr: &TaskInstruction,
    task: &crate::initiative::TaskDef,
    available: &BTreeSet<PredicateKey>,
    catalog: &Catalog,
    report: &mut ValidationReport,
) {
    let at = Some(format!("instructions/{}", task.id));
    if instr.task_id != task.id {
        report.error("E_INSTRUCTION_TASK", format!("instruction names task `{}`", instr.task_id), at.clone());
    }
    let mut used = Vec::new();
    for j in &instr.joins {
        match parse_body(j) {
            Ok(lits) => used.extend(lits.iter().filter_map(|l| PredicateKey::of(&l.goal))),
            Err(e) => report.error("E_CONDITION_PARSE", format!("join `{j}`: {e}"), at.clone()),
        }
    }
    for f in &instr.filters {
        if let FilterDecl::Attribute { attribute, .. } = f {
            used.push(PredicateKey::new(attribute, 2));
        }
    }
    for key in used {
        if !available.contains(&key) && !crate::logic::is_builtin(&key) {
            report.error("E_UNDEFINED_PREDICATE", format!("`{key}` has no facts, producer tool or producing task"), at.clone());
        }
    }
    for a in &instr.action_bindings {
        if !catalog.contains(&a.tool) {
            report.error("E_UNREGISTERED_TOOL", format!("tool `{}` is not registered", a.tool), at.clone());
        } else if !task.allowed_tools.is_empty() && !task.allowed_tools.contains(&a.tool) {
            report.error("E_TOOL_NOT_ALLOWED", format!("task `{}` may not use `{}`", task.id, a.tool), at.clone());
        }
    }
}

/// Loads what it can and reports every content problem. Only unreadable
/// required files are hard errors.
pub fn check_bundle(dir: &Path) -> Result<(Option<Bundle>, ValidationReport), BundleError> {
    let mut report = ValidationReport::default();
    let schema_text = read(&dir.join("schema.json"))?;
    let initiative_text = read(&dir.join("initiative.json"))?;
    let data_dir = dir.join("data");
    if !data_dir.is_dir() {
        return Err(BundleError::Io(format!("{}: not a directory", data_dir.display())));
    }

    let schema = EntitySchema::from_json(&schema_text)
        .map_err(|e| report.error("E_SCHEMA", e.to_string(), Some("schema.json".into())))
        .ok();
    let facts = schema.as_ref().and_then(|s| {
        compile_directory(s, &data_dir)
            .map(|(_, f)| f)
            .map_err(|e| report.error("E_SEMANTICS", e.to_string(), Some("data".into())))
            .ok()
    });
    let params: Params = match read_optional(&dir.join("params.json"))? {
        Some(text) => serde_json::from_str(&text)
            .map_err(|e| report.error("E_PARAMS", e.to_string(), Some("params.json".into())))
            .unwrap_or_default(),
        None => Params::new(),
    };
    let tools = match read_optional(&dir.join("tools.json"))? {
        Some(_) => ToolsFile::load(&dir.join("tools.json"))
            .map(|f| f.tools)
            .map_err(|e| report.error(e.code(), e.to_string(), Some("tools.json".into())))
            .unwrap_or_default(),
        None => Vec::new(),
    };
    let mut fixtures = BTreeMap::new();
    for t in &tools {
        if let HandlerSpec::Fixture { path, .. } = &t.handler {
            match read_fixture(dir, path) {
                Ok(table) => {
                    fixtures.insert(path.clone(), table);
                }
                Err(e) => report.error(e.code(), e.to_string(), Some(path.clone())),
            }
        }
    }
    let catalog = Catalog {
        tools: tools.iter().map(|t| t.descriptor.clone()).collect(),
    };
    let metrics = match read_optional(&dir.join("metrics.abl"))? {
        Some(text) => parse_program(&text)
            .map(|p| p.clauses().to_vec())
            .map_err(|e| report.error("E_METRICS", e.to_string(), Some("metrics.abl".into())))
            .unwrap_or_default(),
        None => Vec::new(),
    };

    let spec = InitiativeSpec::from_json(&initiative_text)
        .map_err(|e| report.error("E_INITIATIVE", e.to_string(), Some("initiative.json".into())))
        .ok();
    let mut instructions = BTreeMap::new();
    let mut initiative = None;
    if let (Some(spec), Some(facts)) = (&spec, &facts) {
        let known = facts.predicates();
        let tool_produced: BTreeSet<PredicateKey> = catalog.tools.iter().filter_map(|d| d.produces().cloned()).collect();
        let ctx = InitiativeContext {
            known: known.clone(),
            tool_produced: tool_produced.clone(),
            tools: catalog.names().map(str::to_string).collect(),
        };
        report.merge(validate_initiative(spec, &ctx));
        if report.is_ok() {
            match Initiative::compile(spec) {
                Ok(init) => initiative = Some(init),
                Err(e) => report.error("E_INITIATIVE", e.to_string(), Some("initiative.json".into())),
            }
        }
        if let Some(init) = &initiative {
            for t in &init.tasks {
                let path = dir.join(&t.instruction);
                let raw = TaskInstruction::from_json(&read(&path)?)
                    .map_err(|e| report.error(e.code(), e.to_string(), Some(t.instruction.clone())));
                if let Ok(resolved) = raw.and_then(|r| {
                    r.resolve_params(&params)
                        .map_err(|e| report.error(e.code(), e.to_string(), Some(t.instruction.clone())))
                }) {
                    instructions.insert(t.id.clone(), resolved);
                }
            }
            let products = task_products(spec, &instructions);
            for t in &init.tasks {
                let Some(instr) = instructions.get(&t.id) else { continue };
                let mut available: BTreeSet<PredicateKey> = known.union(&tool_produced).cloned().collect();
                for (other, preds) in &products {
                    if other != &t.id {
                        available.extend(preds.iter().cloned());
                    }
                }
                check_instruction(instr, t, &available, &catalog, &mut report);
            }
        }
    }
    if !report.is_ok() {
        return Ok((None, report));
    }
    let (Some(schema), Some(facts), Some(spec), Some(initiative)) = (schema, facts, spec, initiative) else {
        return Ok((None, report));
    };
    let products = task_products(&spec, &instructions);
    let bundle = Bundle {
        root: dir.to_path_buf(),
        schema,
        facts,
        spec,
        initiative,
        instructions,
        params,
        tools,
        fixtures,
        metrics,
        products,
    };
    Ok((Some(bundle), report))
}
