use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::ScenarioConfig;
use crate::error::{CtlError, Result};

/// A numeric table written as one CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File stem, without `.csv`.
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format_value(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Scientific notation with nine significant digits.
pub fn format_value(v: f64) -> String {
    format!("{v:.8e}")
}

/// Run-level diagnostics recorded in the manifest.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Diagnostics {
    pub norm_drift_max: f64,
    pub boundary_leak_max: f64,
}

impl Diagnostics {
    pub fn merge(&mut self, other: Diagnostics) {
        self.norm_drift_max = self.norm_drift_max.max(other.norm_drift_max);
        self.boundary_leak_max = self.boundary_leak_max.max(other.boundary_leak_max);
    }
}

/// Everything a scenario produces.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub diagnostics: Diagnostics,
    /// Scalar results echoed as `manifest.result.<key>`.
    pub results: Vec<(String, String)>,
    /// One message per scan point that failed.
    pub failures: Vec<String>,
}

/// Creates `dir` if needed and checks that it accepts files.
pub fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CtlError::io(dir, e))?;
    let probe = dir.join(".conical-ctl-write-check");
    fs::write(&probe, b"").map_err(|e| CtlError::io(dir, e))?;
    let _ = fs::remove_file(probe);
    Ok(())
}

/// Writes every table plus `manifest.kv`; returns the written paths.
pub fn emit(
    dir: &Path,
    config: &ScenarioConfig,
    outcome: &Outcome,
    wall_clock_s: f64,
    started_unix_s: u64,
) -> Result<Vec<PathBuf>> {
    prepare_dir(dir)?;
    let mut written = Vec::new();
    for table in &outcome.tables {
        let path = dir.join(format!("{}.csv", table.name));
        fs::write(&path, table.to_csv()).map_err(|e| CtlError::io(&path, e))?;
        written.push(path);
    }
    let manifest = manifest_text(config, outcome, wall_clock_s, started_unix_s);
    let path = dir.join("manifest.kv");
    fs::write(&path, manifest).map_err(|e| CtlError::io(&path, e))?;
    written.push(path);
    Ok(written)
}

pub fn manifest_text(
    config: &ScenarioConfig,
    outcome: &Outcome,
    wall_clock_s: f64,
    started_unix_s: u64,
) -> String {
    let one_line = |s: &str| s.replace(['\n', '\r', '#'], " ");
    let mut out = String::from("# conical-ctl run manifest; loadable as a config\n");
    out.push_str(&config.to_kv());
    out.push_str("\n[manifest]\n");
    let _ = writeln!(out, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "started_unix_s = {started_unix_s}");
    let _ = writeln!(out, "wall_clock_s = {wall_clock_s:.3}");
    let _ = writeln!(
        out,
        "norm_drift_max = {:e}",
        outcome.diagnostics.norm_drift_max
    );
    let _ = writeln!(
        out,
        "boundary_leak_max = {:e}",
        outcome.diagnostics.boundary_leak_max
    );
    let files: Vec<String> = outcome
        .tables
        .iter()
        .map(|t| format!("{}.csv", t.name))
        .collect();
    let _ = writeln!(out, "outputs = {}", files.join(", "));
    for (k, v) in &outcome.results {
        let _ = writeln!(out, "result.{k} = {}", one_line(v));
    }
    for (i, f) in outcome.failures.iter().enumerate() {
        let _ = writeln!(out, "failure.{i} = {}", one_line(f));
    }
    out
}
