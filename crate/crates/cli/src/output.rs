//! Artifact writers and the append-only run log.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One line of `runs.jsonl`.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub command: String,
    pub params: BTreeMap<String, Value>,
    pub seed: u64,
    pub tool_version: String,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<String>,
    pub summary: Value,
}

/// Collects artifacts written during one run. Artifacts carry no timestamps so
/// that identical inputs produce identical bytes.
pub struct Artifacts {
    dir: PathBuf,
    seed: u64,
    pub written: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: &Path, seed: u64) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), seed, written: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let path = self.dir.join(name);
        self.written.push(path.display().to_string());
        path
    }

    /// Writes `{"tool_version", "seed", "params", "result"}`.
    pub fn json<T: Serialize>(&mut self, name: &str, params: &BTreeMap<String, Value>, result: &T) -> Result<(), CliError> {
        let doc = json!({
            "tool_version": TOOL_VERSION,
            "seed": self.seed,
            "params": params,
            "result": result,
        });
        let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))?;
        let path = self.path(name);
        std::fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
        let path = self.path(name);
        let io = |e: csv::Error| CliError::Io(format!("cannot write {}: {e}", path.display()));
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        w.write_record(header).map_err(io)?;
        for row in rows {
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Io(e.to_string()))
    }
}

pub fn append_run_record(dir: &Path, record: &RunRecord) -> Result<(), CliError> {
    let path = dir.join("runs.jsonl");
    let line = serde_json::to_string(record).map_err(|e| CliError::Io(e.to_string()))?;
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))?;
    writeln!(f, "{line}").map_err(|e| CliError::Io(e.to_string()))
}

/// Shortest round-trip representation, switching to exponent form for very
/// small or large magnitudes.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}
