use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::Value;

/// One directory per run: `events.jsonl`, `programs/<task>.abl`,
/// `persisted/<store>.abl`, `receipts.jsonl` and `final_state.json`.
#[derive(Clone, Debug)]
pub(crate) struct RunStore {
    dir: PathBuf,
}

impl RunStore {
    pub(crate) fn create(dir: &Path) -> std::io::Result<Self> {
        for sub in ["programs", "persisted"] {
            if dir.join(sub).exists() {
                fs::remove_dir_all(dir.join(sub))?;
            }
            fs::create_dir_all(dir.join(sub))?;
        }
        fs::write(dir.join("receipts.jsonl"), "")?;
        Ok(RunStore { dir: dir.to_path_buf() })
    }

    pub(crate) fn events_path(&self) -> PathBuf {
        self.dir.join("events.jsonl")
    }

    fn report(what: &str, r: std::io::Result<()>) {
        if let Err(e) = r {
            log::error!("run store: cannot write {what}: {e}");
        }
    }

    pub(crate) fn write_program(&self, task: &str, text: &str) {
        Self::report("program", fs::write(self.dir.join("programs").join(format!("{task}.abl")), text));
    }

    pub(crate) fn append_receipt(&self, receipt: &Value) {
        let r = OpenOptions::new()
            .append(true)
            .open(self.dir.join("receipts.jsonl"))
            .and_then(|mut f| writeln!(f, "{receipt}"));
        Self::report("receipt", r);
    }

    pub(crate) fn write_persisted(&self, stores: &BTreeMap<String, Vec<String>>) {
        for (store, facts) in stores {
            let mut text = String::new();
            for f in facts {
                text.push_str(f);
                text.push('\n');
            }
            Self::report("persisted facts", fs::write(self.dir.join("persisted").join(format!("{store}.abl")), text));
        }
    }

    pub(crate) fn write_final(&self, value: &Value) {
        let text = serde_json::to_string_pretty(value).expect("json value") + "\n";
        Self::report("final state", fs::write(self.dir.join("final_state.json"), text));
    }
}
