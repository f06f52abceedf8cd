use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

fn case_study() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../case_study")
}

fn autobus(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_autobus")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn copy_bundle(to: &Path) {
    let src = case_study();
    for sub in ["", "data", "fixtures", "instructions"] {
        std::fs::create_dir_all(to.join(sub)).unwrap();
        for entry in std::fs::read_dir(src.join(sub)).unwrap() {
            let entry = entry.unwrap();
            if entry.file_type().unwrap().is_file() {
                std::fs::copy(entry.path(), to.join(sub).join(entry.file_name())).unwrap();
            }
        }
    }
}

fn sorted_lines(path: &Path) -> Vec<String> {
    let mut lines: Vec<String> = std::fs::read_to_string(path).unwrap().lines().map(str::to_string).collect();
    lines.sort();
    lines
}

/// Events with timestamps dropped.
fn timeless_events(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("timestamp_ms");
            v
        })
        .collect()
}

#[test]
fn validate_exit_codes() {
    let cs = case_study();
    let ok = autobus(&["validate", cs.to_str().unwrap()]);
    assert_eq!(code(&ok), 0, "{}", stdout(&ok));
    assert!(stdout(&ok).contains("0 error(s)"));

    let dir = tempfile::tempdir().unwrap();
    copy_bundle(dir.path());
    let path = dir.path().join("initiative.json");
    let mut spec: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let first = spec["tasks"][0].clone();
    spec["tasks"].as_array_mut().unwrap().push(first);
    std::fs::write(&path, spec.to_string()).unwrap();
    let dup = autobus(&["validate", dir.path().to_str().unwrap()]);
    assert_eq!(code(&dup), 1);
    assert!(stdout(&dup).contains("task1"), "{}", stdout(&dup));
    let as_json = autobus(&["validate", "--json", dir.path().to_str().unwrap()]);
    let report: Value = serde_json::from_slice(&as_json.stdout).unwrap();
    assert!(!report["errors"].as_array().unwrap().is_empty());

    std::fs::remove_file(dir.path().join("schema.json")).unwrap();
    assert_eq!(code(&autobus(&["validate", dir.path().to_str().unwrap()])), 2);
    assert_eq!(code(&autobus(&["validate", "/no/such/bundle"])), 2);
}

#[test]
fn run_reproduces_the_golden_receipts_and_is_repeatable() {
    let cs = case_study();
    let out = tempfile::tempdir().unwrap();
    let mut snapshots = Vec::new();
    for round in 0..2 {
        let o = autobus(&[
            "run",
            cs.to_str().unwrap(),
            "--auto-approve",
            "--oracle",
            "--run-id",
            "golden",
            "--out",
            out.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
        assert!(stdout(&o).contains("exact match"));
        let run = out.path().join("golden");
        assert_eq!(sorted_lines(&run.join("receipts.jsonl")), sorted_lines(&cs.join("golden/receipts.jsonl")));
        assert_eq!(
            std::fs::read_to_string(run.join("programs/task3.abl")).unwrap(),
            std::fs::read_to_string(cs.join("golden/task3.abl")).unwrap()
        );
        let replayed = autobus(&["replay", run.join("events.jsonl").to_str().unwrap(), "--check"]);
        assert_eq!(code(&replayed), 0, "round {round}: {}", stdout(&replayed));
        let mut events = timeless_events(&run.join("events.jsonl"));
        events.sort_by_key(|e| e.to_string());
        snapshots.push((events, std::fs::read_to_string(run.join("final_state.json")).unwrap()));
    }
    assert_eq!(snapshots[0], snapshots[1]);
}

#[test]
fn run_json_and_failure_codes() {
    let cs = case_study();
    let out = tempfile::tempdir().unwrap();
    let o = autobus(&["--json", "run", cs.to_str().unwrap(), "--auto-approve", "--out", out.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["result"]["status"], "completed");
    assert_eq!(v["run_id"], "i1-run");

    let t = autobus(&["run", cs.to_str().unwrap(), "--timeout", "0.2", "--out", out.path().to_str().unwrap()]);
    assert_eq!(code(&t), 3, "{}", stdout(&t));
    assert!(stdout(&t).contains("cancelled"));

    let unknown = autobus(&["run", cs.to_str().unwrap(), "--initiative", "i9", "--out", out.path().to_str().unwrap()]);
    assert_eq!(code(&unknown), 2);
    assert!(stderr(&unknown).contains("i9"));

    let dir = tempfile::tempdir().unwrap();
    copy_bundle(dir.path());
    let path = dir.path().join("initiative.json");
    let mut spec: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    spec["tasks"][0]["postconditions"] = serde_json::json!(["task_done(task1)", "never_recorded(task1)"]);
    std::fs::write(&path, spec.to_string()).unwrap();
    let failed = autobus(&["run", dir.path().to_str().unwrap(), "--auto-approve", "--out", out.path().to_str().unwrap()]);
    assert_eq!(code(&failed), 1, "{}{}", stdout(&failed), stderr(&failed));
}

#[test]
fn run_with_seed_scores_a_fresh_dataset() {
    let cs = case_study();
    let out = tempfile::tempdir().unwrap();
    let o = autobus(&[
        "run",
        cs.to_str().unwrap(),
        "--auto-approve",
        "--seed",
        "77",
        "--consumers",
        "250",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("exact match"));
    assert!(out.path().join("bundle-seed77-n250/data/consumer.csv").exists());
}

fn http(port: u16, method: &str, path: &str, body: &str) -> Option<(u16, Value)> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).ok()?;
    let req = format!(
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    s.write_all(req.as_bytes()).ok()?;
    let mut text = String::new();
    s.read_to_string(&mut text).ok()?;
    let status = text.split_whitespace().nth(1)?.parse().ok()?;
    let json = text.split("\r\n\r\n").nth(1).and_then(|b| serde_json::from_str(b).ok()).unwrap_or(Value::Null);
    Some((status, json))
}

#[test]
fn run_waits_for_an_approval_posted_over_http() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let out = tempfile::tempdir().unwrap();
    let child = Command::new(env!("CARGO_BIN_EXE_autobus"))
        .args(["run", case_study().to_str().unwrap(), "--port", &port.to_string(), "--out", out.path().to_str().unwrap()])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let aid = loop {
        assert!(Instant::now() < deadline, "approval never appeared");
        if let Some((200, Value::Array(list))) = http(port, "GET", "/runs/i1-run/approvals", "") {
            if let Some(a) = list.first() {
                break a["id"].as_str().unwrap().to_string();
            }
        }
        std::thread::sleep(Duration::from_millis(50));
    };
    let (status, decided) = http(port, "POST", &format!("/runs/i1-run/approvals/{aid}"), r#"{"decision":"approved","decider":"ops"}"#).unwrap();
    assert_eq!(status, 200, "{decided}");
    let o = child.wait_with_output().unwrap();
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("task3            completed"));
}

#[test]
fn query_prints_one_term_per_line() {
    let snippet = case_study().join("snippet.abl");
    let s = snippet.to_str().unwrap();
    let o = autobus(&["query", s, "active_subscription(S)"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "active_subscription(s456)\n");
    let o = autobus(&["query", s, "precondition(send_promotion(c123))."]);
    assert_eq!(stdout(&o), "precondition(send_promotion(c123))\n");
    let none = autobus(&["query", s, "active_subscription(s999)"]);
    assert_eq!((code(&none), stdout(&none).as_str()), (0, ""));
    assert_eq!(code(&autobus(&["query", s, "active_subscription("])), 2);
    assert_eq!(code(&autobus(&["query", "/no/such.abl", "a"])), 2);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.abl");
    std::fs::write(&bad, "p(X) :- q(X), X > a. q(1).").unwrap();
    let o = autobus(&["query", bad.to_str().unwrap(), "p(X)"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));

    let o = autobus(&["--json", "query", case_study().to_str().unwrap(), "has_status(S, active)", "--max-solutions", "2"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
}

#[test]
fn replay_exit_codes() {
    let golden = case_study().join("golden/run/events.jsonl");
    let o = autobus(&["replay", golden.to_str().unwrap(), "--check"]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("matches final_state.json"));

    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(case_study().join("golden/run/final_state.json"), dir.path().join("final_state.json")).unwrap();
    let lines: Vec<String> = std::fs::read_to_string(&golden).unwrap().lines().map(str::to_string).collect();
    let log = dir.path().join("events.jsonl");
    std::fs::write(&log, lines[..lines.len() - 5].join("\n")).unwrap();
    assert_eq!(code(&autobus(&["replay", log.to_str().unwrap()])), 0);
    assert_eq!(code(&autobus(&["replay", log.to_str().unwrap(), "--check"])), 1);

    let mut gap = lines.clone();
    gap.remove(4);
    std::fs::write(&log, gap.join("\n")).unwrap();
    let o = autobus(&["replay", log.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("seq 5"), "{}", stderr(&o));
    std::fs::write(&log, "not json\n").unwrap();
    assert_eq!(code(&autobus(&["replay", log.to_str().unwrap()])), 2);
}
