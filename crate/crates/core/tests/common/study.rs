use std::path::{Path, PathBuf};
use std::sync::Arc;

use autobus_core::case_study::{generate_dataset, materialize, DatasetConfig, StudyParams};
use std::time::{Duration, Instant};

use autobus_core::orchestrator::{Bundle, Event, EventKind, RunHandle};
use serde_json::Value;

pub fn template_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../case_study")
}

/// A case-study bundle with a freshly generated dataset.
pub fn study_dir(seed: u64, n: usize) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_dataset(&DatasetConfig::with_seed(seed, n)).unwrap();
    materialize(&template_dir(), dir.path(), &data, &StudyParams::default()).unwrap();
    dir
}

pub fn edit_json(path: &Path, edit: impl FnOnce(&mut Value)) {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    edit(&mut v);
    std::fs::write(path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

pub fn load(dir: &Path) -> Arc<Bundle> {
    Arc::new(Bundle::load(dir).unwrap())
}

pub fn of_kind(events: &[Event], kind: EventKind) -> Vec<&Event> {
    events.iter().filter(|e| e.kind == kind).collect()
}

/// Position of the first event of `kind` for `task`.
pub fn first(events: &[Event], kind: EventKind, task: &str) -> Option<usize> {
    events.iter().position(|e| e.kind == kind && e.task() == Some(task))
}

/// Blocks until the run emits an event of `kind`; panics after 10 s.
pub fn wait_for(handle: &RunHandle, kind: EventKind) -> Event {
    let deadline = Instant::now() + Duration::from_secs(10);
    let mut seen = 0;
    while Instant::now() < deadline {
        for e in handle.wait_events(seen, Duration::from_millis(100)) {
            if e.kind == kind {
                return e;
            }
            seen = e.seq;
        }
    }
    panic!("no {kind} event within 10 s");
}
