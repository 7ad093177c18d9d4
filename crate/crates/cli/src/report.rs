//! Tabular report blocks, the run manifest and their CSV/JSON rendering.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => sig6(*x),
            Cell::Int(k) => k.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(k: usize) -> Self {
        Cell::Int(k as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }
}

/// Six significant digits, scientific notation outside 1e-5..1e10.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let e = x.abs().log10().floor() as i32;
    if !(-5..=9).contains(&e) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - e).max(0) as usize;
    format!("{x:.decimals$}")
}

#[derive(Debug, Clone, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_columns(name: &str, columns: Vec<String>) -> Self {
        Self {
            name: name.into(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "{}", self.name);
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }
}

/// Pass/fail line for a trend or cross-check.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// What produced a report. Everything except the wall-clock time is
/// deterministic, so only `manifest.json` carries the timing.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    pub case: String,
    pub config: BTreeMap<String, String>,
    pub seed: Option<u64>,
    /// Inputs filled in by defaults rather than case data.
    pub defaulted: Vec<String>,
    pub case_notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_s: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub manifest: RunManifest,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new(manifest: RunManifest) -> Self {
        Self {
            manifest,
            tables: Vec::new(),
            checks: Vec::new(),
        }
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: String) {
        self.checks.push(Check {
            name: name.into(),
            pass,
            detail,
        });
    }

    /// Plain-text rendering for standard output: manifest comments, each
    /// table as a titled CSV block, then the check lines.
    pub fn render(&self) -> Result<String> {
        let m = &self.manifest;
        let mut out = format!(
            "# relief {} {} case={}\n",
            m.tool_version, m.subcommand, m.case
        );
        for (k, v) in &m.config {
            out += &format!("# {k}={v}\n");
        }
        for d in &m.defaulted {
            out += &format!("# defaulted: {d}\n");
        }
        for t in &self.tables {
            out += &format!("\n## {}\n", t.name);
            out += &t.to_csv()?;
        }
        if !self.checks.is_empty() {
            out.push('\n');
        }
        for c in &self.checks {
            let tag = if c.pass { "PASS" } else { "FAIL" };
            out += &format!("{tag} {}: {}\n", c.name, c.detail);
        }
        Ok(out)
    }

    /// Writes one CSV per table, `report.json` and `manifest.json`.
    pub fn write_dir(&self, dir: &Path, wall_clock_s: f64) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let write = |name: &str, text: String| {
            let path = dir.join(name);
            fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
        };
        for t in &self.tables {
            write(&format!("{}.csv", t.name), t.to_csv()?)?;
        }
        write("report.json", serde_json::to_string_pretty(self)? + "\n")?;
        let mut timed = self.manifest.clone();
        timed.wall_clock_s = Some(wall_clock_s);
        write("manifest.json", serde_json::to_string_pretty(&timed)? + "\n")
    }
}
