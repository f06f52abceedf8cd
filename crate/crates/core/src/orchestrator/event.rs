use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ReplayError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    RunStarted,
    TaskReady,
    ProgramSynthesized,
    ApprovalRequested,
    ApprovalDecided,
    GroundingFetched,
    TaskCompleted,
    TaskFailed,
    ActionInvoked,
    InitiativeEvaluated,
    RunFinished,
}

impl EventKind {
    pub const ALL: [EventKind; 11] = [
        EventKind::RunStarted,
        EventKind::TaskReady,
        EventKind::ProgramSynthesized,
        EventKind::ApprovalRequested,
        EventKind::ApprovalDecided,
        EventKind::GroundingFetched,
        EventKind::TaskCompleted,
        EventKind::TaskFailed,
        EventKind::ActionInvoked,
        EventKind::InitiativeEvaluated,
        EventKind::RunFinished,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::RunStarted => "run_started",
            EventKind::TaskReady => "task_ready",
            EventKind::ProgramSynthesized => "program_synthesized",
            EventKind::ApprovalRequested => "approval_requested",
            EventKind::ApprovalDecided => "approval_decided",
            EventKind::GroundingFetched => "grounding_fetched",
            EventKind::TaskCompleted => "task_completed",
            EventKind::TaskFailed => "task_failed",
            EventKind::ActionInvoked => "action_invoked",
            EventKind::InitiativeEvaluated => "initiative_evaluated",
            EventKind::RunFinished => "run_finished",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub timestamp_ms: u64,
    pub kind: EventKind,
    pub payload: Value,
}

impl Event {
    pub fn task(&self) -> Option<&str> {
        self.payload.get("task").and_then(Value::as_str)
    }
}

/// Append-only, gapless event sequence with an optional JSON-lines sink.
#[derive(Default)]
pub struct EventLog {
    events: Mutex<Vec<Event>>,
    changed: Condvar,
    sink: Mutex<Option<BufWriter<File>>>,
}

impl EventLog {
    pub fn new() -> Self {
        EventLog::default()
    }

    pub fn with_sink(path: &Path) -> std::io::Result<Self> {
        let file = File::create(path)?;
        Ok(EventLog {
            sink: Mutex::new(Some(BufWriter::new(file))),
            ..EventLog::default()
        })
    }

    pub(crate) fn emit(&self, kind: EventKind, payload: Value) -> u64 {
        let mut events = self.events.lock().expect("event lock");
        let event = Event {
            seq: events.len() as u64 + 1,
            timestamp_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
            kind,
            payload,
        };
        if let Some(sink) = self.sink.lock().expect("sink lock").as_mut() {
            let line = serde_json::to_string(&event).expect("event serializes");
            if let Err(e) = writeln!(sink, "{line}").and_then(|_| sink.flush()) {
                log::error!("event sink: {e}");
            }
        }
        let seq = event.seq;
        events.push(event);
        self.changed.notify_all();
        seq
    }

    pub fn all(&self) -> Vec<Event> {
        self.events.lock().expect("event lock").clone()
    }

    pub fn len(&self) -> usize {
        self.events.lock().expect("event lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Events with `seq > since`.
    pub fn since(&self, since: u64) -> Vec<Event> {
        let events = self.events.lock().expect("event lock");
        events.iter().skip(since as usize).cloned().collect()
    }

    /// Like `since`, but blocks up to `timeout` for at least one new event.
    pub fn wait_since(&self, since: u64, timeout: Duration) -> Vec<Event> {
        let deadline = Instant::now() + timeout;
        let mut events = self.events.lock().expect("event lock");
        while events.len() as u64 <= since {
            let now = Instant::now();
            if now >= deadline {
                return Vec::new();
            }
            events = self.changed.wait_timeout(events, deadline - now).expect("event lock").0;
        }
        events.iter().skip(since as usize).cloned().collect()
    }
}

/// Parses a JSON-lines event file. Blank lines are skipped.
pub fn read_events(path: &Path) -> Result<Vec<Event>, ReplayError> {
    let file = File::open(path).map_err(|e| ReplayError::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ReplayError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_event(&line, i + 1)?);
    }
    Ok(out)
}

pub fn parse_event(line: &str, line_no: usize) -> Result<Event, ReplayError> {
    let malformed = |m: String| ReplayError::Malformed { line: line_no, message: m };
    let raw: Value = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    let kind = raw
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed("missing kind".into()))?;
    let kind = kind.parse().map_err(ReplayError::UnknownKind)?;
    let seq = raw
        .get("seq")
        .and_then(Value::as_u64)
        .ok_or_else(|| malformed("missing seq".into()))?;
    Ok(Event {
        seq,
        timestamp_ms: raw.get("timestamp_ms").and_then(Value::as_u64).unwrap_or(0),
        kind,
        payload: raw.get("payload").cloned().unwrap_or(Value::Null),
    })
}
