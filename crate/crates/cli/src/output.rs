//! Records, tables and the on-disk layout `<root>/<subcommand>/<timestamp>-<seed>/`.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::Result;

/// Environment variable overriding the output root (default `./out`).
pub const OUTPUT_ROOT_VAR: &str = "DELAYEMBED_OUT";

/// Shortest decimal that round-trips to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn build_id() -> String {
    match option_env!("DELAYEMBED_BUILD_ID") {
        Some(id) => format!("delayembed {} ({id})", env!("CARGO_PKG_VERSION")),
        None => format!("delayembed {}", env!("CARGO_PKG_VERSION")),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Timing {
    pub started: String,
    pub elapsed_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub subcommand: String,
    pub build: String,
    pub config: ExperimentConfig,
    pub output: serde_json::Value,
    pub checks: Vec<Check>,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl ExperimentRecord {
    pub fn new(subcommand: &str, config: &ExperimentConfig, output: serde_json::Value, checks: Vec<Check>) -> Self {
        Self {
            subcommand: subcommand.into(),
            build: build_id(),
            config: config.clone(),
            output,
            passed: checks.iter().all(|c| c.passed),
            checks,
            timing: None,
        }
    }

    /// Pretty JSON of every field except the timing block.
    pub fn canonical_json(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.timing = None;
        Ok(serde_json::to_string_pretty(&copy)?)
    }
}

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"))
}

/// Write `record.json` and one CSV per table into a fresh run directory.
pub fn persist(root: &Path, record: &ExperimentRecord, tables: &[Table]) -> Result<PathBuf> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string();
    let parent = root.join(&record.subcommand);
    std::fs::create_dir_all(&parent)?;
    let stem = format!("{stamp}-{}", record.config.experiment.seed);
    let mut dir = parent.join(&stem);
    let mut i = 1;
    while dir.exists() {
        dir = parent.join(format!("{stem}-{i}"));
        i += 1;
    }
    std::fs::create_dir(&dir)?;
    std::fs::write(dir.join("record.json"), serde_json::to_string_pretty(record)? + "\n")?;
    for t in tables {
        std::fs::write(dir.join(format!("{}.csv", t.name)), t.to_csv()?)?;
    }
    Ok(dir)
}
