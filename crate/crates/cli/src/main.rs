use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use autobus_core::case_study::{generate_dataset, materialize, score_study, DatasetConfig, StudyParams};
use autobus_core::initiative::TaskStatus;
use autobus_core::logic::{parse_program, parse_term, solve, Program, SolveLimits};
use autobus_core::orchestrator::{
    check_bundle, read_events, replay, Bundle, BundleError, Orchestrator, RunRequest, RunResult, RunStatus, StateSummary,
};
use clap::{Parser, Subcommand};
use serde_json::{json, Value};

const OK: u8 = 0;
const FAILURE: u8 = 1;
const INPUT: u8 = 2;
const TIMEOUT: u8 = 3;

#[derive(Parser)]
#[command(name = "autobus", version, about = "Run business initiatives as logic-gated task networks")]
struct Cli {
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a bundle's schema, data, initiative, instructions and tools.
    Validate { bundle: PathBuf },
    /// Execute an initiative and write its run directory.
    Run(RunArgs),
    /// Solve one goal against an ABL file or a bundle's facts.
    Query {
        /// An `.abl` file or a bundle directory.
        source: PathBuf,
        goal: String,
        #[arg(long)]
        max_solutions: Option<usize>,
    },
    /// Rebuild the final state of a run from its event log.
    Replay {
        events: PathBuf,
        /// Compare against `final_state.json` next to the log.
        #[arg(long)]
        check: bool,
    },
    /// Serve the HTTP API for one or more bundles.
    Serve {
        #[arg(required = true)]
        bundles: Vec<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Where run directories are written.
        #[arg(long, default_value = "runs")]
        runs: PathBuf,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    bundle: PathBuf,
    /// Initiative id to run; must match the bundle.
    #[arg(long)]
    initiative: Option<String>,
    #[arg(long)]
    run_id: Option<String>,
    /// Parent of the run directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Approve every request without waiting.
    #[arg(long)]
    auto_approve: bool,
    /// Seconds to wait for approvals before giving up.
    #[arg(long)]
    timeout: Option<f64>,
    /// Serve the HTTP API while the run is live, so approvals can be posted.
    #[arg(long)]
    port: Option<u16>,
    /// Regenerate the bundle's data with this seed before running.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1000, requires = "seed")]
    consumers: usize,
    /// Score the run against the case-study oracle.
    #[arg(long)]
    oracle: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Validate { bundle } => validate(&bundle, cli.json),
        Command::Run(args) => run(args, cli.json),
        Command::Query { source, goal, max_solutions } => query(&source, &goal, max_solutions, cli.json),
        Command::Replay { events, check } => replay_cmd(&events, check, cli.json),
        Command::Serve { bundles, port, host, runs } => serve(&bundles, &host, port, &runs),
    };
    ExitCode::from(code)
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json"));
}

fn validate(dir: &Path, as_json: bool) -> u8 {
    let report = match check_bundle(dir) {
        Ok((_, report)) => report,
        Err(e) => {
            eprintln!("error: {e}");
            return INPUT;
        }
    };
    if as_json {
        print_json(&serde_json::to_value(&report).expect("report serializes"));
    } else {
        for f in &report.errors {
            println!("error {f}");
        }
        for f in &report.warnings {
            println!("warning {f}");
        }
        println!("{} error(s), {} warning(s)", report.errors.len(), report.warnings.len());
    }
    if report.is_ok() {
        OK
    } else {
        FAILURE
    }
}

fn load_bundle(dir: &Path) -> Result<Bundle, u8> {
    Bundle::load(dir).map_err(|e| {
        match &e {
            BundleError::Invalid(report) => {
                for f in &report.errors {
                    eprintln!("error {f}");
                }
            }
            BundleError::Io(m) => eprintln!("error: {m}"),
        }
        match e {
            BundleError::Invalid(_) => FAILURE,
            BundleError::Io(_) => INPUT,
        }
    })
}

fn regenerate(template: &Path, out: &Path, seed: u64, consumers: usize) -> Result<PathBuf, String> {
    let params = match std::fs::read_to_string(template.join("params.json")) {
        Ok(text) => serde_json::from_str(&text).map_err(|e| format!("params.json: {e}"))?,
        Err(_) => StudyParams::default(),
    };
    let data = generate_dataset(&DatasetConfig::with_seed(seed, consumers)).map_err(|e| e.to_string())?;
    let dest = out.join(format!("bundle-seed{seed}-n{consumers}"));
    materialize(template, &dest, &data, &params).map_err(|e| e.to_string())?;
    Ok(dest)
}

fn run(args: RunArgs, as_json: bool) -> u8 {
    let dir = match args.seed {
        Some(seed) => match regenerate(&args.bundle, &args.out, seed, args.consumers) {
            Ok(d) => d,
            Err(e) => {
                eprintln!("error: {e}");
                return INPUT;
            }
        },
        None => args.bundle.clone(),
    };
    let bundle = match load_bundle(&dir) {
        Ok(b) => b,
        Err(code) => return code,
    };
    let initiative = bundle.id().to_string();
    if let Some(want) = &args.initiative {
        if *want != initiative {
            eprintln!("error: unknown initiative `{want}`; the bundle defines `{initiative}`");
            return INPUT;
        }
    }
    let mut orch = Orchestrator::new(Some(&args.out));
    orch.add_bundle(bundle);
    let orch = Arc::new(orch);
    let req = RunRequest {
        initiative_id: initiative.clone(),
        auto_approve: args.auto_approve,
        run_id: Some(args.run_id.clone().unwrap_or_else(|| format!("{initiative}-run"))),
        approval_timeout_ms: args.timeout.map(|s| (s * 1000.0).round() as u64),
    };
    let handle = match orch.start(&req) {
        Ok(h) => h,
        Err(e) => {
            eprintln!("error: {e}");
            return INPUT;
        }
    };
    let _server = args.port.map(|port| {
        let orch = orch.clone();
        eprintln!("approvals accepted at http://127.0.0.1:{port}/runs/{}/approvals", handle.run_id());
        std::thread::spawn(move || serve_blocking(orch, SocketAddr::from(([127, 0, 0, 1], port))))
    });
    if !args.auto_approve && args.timeout.is_none() && args.port.is_none() {
        eprintln!("note: approval requests will block; pass --auto-approve, --timeout or --port");
    }
    let result = handle.wait();
    let study = if args.oracle || args.seed.is_some() {
        let bundle = orch.bundle(&initiative).expect("bundle was added");
        match score_study(bundle, &result, &handle) {
            Ok(r) => Some(r),
            Err(e) => {
                eprintln!("error: {e}");
                return INPUT;
            }
        }
    } else {
        None
    };
    if as_json {
        let mut out = json!({ "run_id": handle.run_id(), "run_dir": handle.run_dir(), "result": result });
        if let Some(s) = &study {
            out["study"] = serde_json::to_value(s).expect("report serializes");
        }
        print_json(&out);
    } else {
        print_result(handle.run_id(), handle.run_dir(), &result);
        if let Some(s) = &study {
            println!(
                "oracle: {} target(s), engine {}, campaign {}: {}",
                s.oracle_targets.len(),
                s.engine_targets.len(),
                s.campaign_recipients.len(),
                if s.exact_match { "exact match".to_string() } else { format!("MISMATCH at {}", s.first_difference.as_deref().unwrap_or("?")) }
            );
        }
    }
    if study.as_ref().is_some_and(|s| !s.exact_match) {
        return FAILURE;
    }
    match result.status {
        RunStatus::Completed => OK,
        RunStatus::TimedOut => TIMEOUT,
        RunStatus::Failed | RunStatus::Running => FAILURE,
    }
}

fn print_statuses(statuses: &BTreeMap<String, TaskStatus>, iterations: &BTreeMap<String, u32>) {
    println!("{:<16} {:<18} iterations", "task", "status");
    for (task, status) in statuses {
        println!("{:<16} {:<18} {}", task, status.as_str(), iterations.get(task).copied().unwrap_or(0));
    }
}

fn print_result(run_id: &str, dir: Option<&Path>, result: &RunResult) {
    println!("run {run_id}: {}", result.status.as_str());
    if let Some(d) = dir {
        println!("run directory: {}", d.display());
    }
    print_statuses(&result.summary.statuses, &result.summary.iterations);
    print_evaluation(&result.summary);
}

fn print_evaluation(summary: &StateSummary) {
    if let Some(e) = &summary.evaluation {
        let verdict = if e.success { "success" } else { "not_success" };
        let bindings: Vec<String> = e.bindings.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("evaluation: {verdict} {}", bindings.join(" "));
    }
}

fn query_program(source: &Path) -> Result<Program, (u8, String)> {
    if source.is_dir() {
        let bundle = Bundle::load(source).map_err(|e| match e {
            BundleError::Io(m) => (INPUT, m),
            e => (INPUT, e.to_string()),
        })?;
        let mut clauses = bundle.facts.to_program().clauses().to_vec();
        clauses.extend(bundle.metrics.iter().cloned());
        return Ok(Program::new(clauses));
    }
    let text = std::fs::read_to_string(source).map_err(|e| (INPUT, format!("{}: {e}", source.display())))?;
    parse_program(&text).map_err(|e| (INPUT, format!("{}: {e}", source.display())))
}

fn query(source: &Path, goal: &str, max_solutions: Option<usize>, as_json: bool) -> u8 {
    let program = match query_program(source) {
        Ok(p) => p,
        Err((code, m)) => {
            eprintln!("error: {m}");
            return code;
        }
    };
    let goal = match parse_term(goal.trim().trim_end_matches('.')) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: bad goal: {e}");
            return INPUT;
        }
    };
    let limits = SolveLimits { max_solutions, ..SolveLimits::default() };
    let mut answers = Vec::new();
    for answer in solve(&goal, &program, limits) {
        match answer {
            Ok(s) => answers.push(s.apply(&goal)),
            Err(e) => {
                eprintln!("error: {e}");
                return FAILURE;
            }
        }
    }
    if as_json {
        print_json(&Value::Array(answers.iter().map(|t| json!(t.to_string())).collect()));
    } else {
        for a in &answers {
            println!("{a}");
        }
    }
    OK
}

fn replay_cmd(path: &Path, check: bool, as_json: bool) -> u8 {
    let events = match read_events(path) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: {e}");
            return INPUT;
        }
    };
    let summary = match replay(&events) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return INPUT;
        }
    };
    let mut code = OK;
    let mut verdict = None;
    if check {
        let final_path = path.parent().unwrap_or(Path::new(".")).join("final_state.json");
        let recorded: Result<StateSummary, String> = std::fs::read_to_string(&final_path)
            .map_err(|e| format!("{}: {e}", final_path.display()))
            .and_then(|t| serde_json::from_str::<Value>(&t).map_err(|e| e.to_string()))
            .and_then(|v| serde_json::from_value(v["summary"].clone()).map_err(|e| e.to_string()));
        match recorded {
            Ok(r) if r == summary => verdict = Some(true),
            Ok(_) => {
                verdict = Some(false);
                code = FAILURE;
            }
            Err(e) => {
                eprintln!("error: {e}");
                return INPUT;
            }
        }
    }
    if as_json {
        print_json(&json!({ "summary": summary, "matches_final_state": verdict }));
    } else {
        println!("replayed {} event(s) of run {}", events.len(), summary.run_id);
        print_statuses(&summary.statuses, &summary.iterations);
        print_evaluation(&summary);
        match verdict {
            Some(true) => println!("check: matches final_state.json"),
            Some(false) => println!("check: DIFFERS from final_state.json"),
            None => {}
        }
    }
    code
}

fn serve_blocking(orch: Arc<Orchestrator>, addr: SocketAddr) -> u8 {
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return FAILURE;
        }
    };
    match rt.block_on(autobus_server::serve(orch, addr)) {
        Ok(()) => OK,
        Err(e) => {
            eprintln!("error: cannot serve on {addr}: {e}");
            INPUT
        }
    }
}

fn serve(dirs: &[PathBuf], host: &str, port: u16, runs: &Path) -> u8 {
    let addr: SocketAddr = match format!("{host}:{port}").parse() {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: bad address: {e}");
            return INPUT;
        }
    };
    let mut orch = Orchestrator::new(Some(runs));
    for d in dirs {
        match load_bundle(d) {
            Ok(b) => orch.add_bundle(b),
            Err(code) => return code,
        }
    }
    eprintln!("serving {} initiative(s) on http://{addr}", dirs.len());
    serve_blocking(Arc::new(orch), addr)
}
