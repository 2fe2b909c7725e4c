//! Result tables and their on-disk form.
//!
//! Every file opens with a header block (artifact version, resolved spec,
//! seed, tolerances, checks and a SHA-256 of the canonical CSV body). Nothing
//! that varies between runs, like wall time, goes into a file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::spec::{ExperimentSpec, Format};

pub const ARTIFACT_VERSION: &str = concat!("qd v", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Flag(bool),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => format_float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
            Cell::Flag(b) => b.to_string(),
        }
    }
}

impl Serialize for Cell {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Cell::Num(v) => s.serialize_f64(*v),
            Cell::Int(v) => s.serialize_u64(*v),
            Cell::Text(v) => s.serialize_str(v),
            Cell::Flag(v) => s.serialize_bool(*v),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Flag(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Shortest round-trip decimal, switching to exponent form for very small or
/// large magnitudes.
pub fn format_float(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 {
        "0".to_string()
    } else if (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File stem suffix; `None` for the command's main table.
    pub name: Option<&'static str>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: Option<&'static str>, columns: Vec<&'static str>) -> Self {
        Self {
            name,
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| *c == name)
    }

    fn check_finite(&self) -> Result<(), CliError> {
        for (i, row) in self.rows.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                if let Cell::Num(v) = cell
                    && !v.is_finite()
                {
                    return Err(CliError::Numeric(format!(
                        "non-finite {} in row {i} of {}",
                        self.columns[j],
                        self.name.unwrap_or("main")
                    )));
                }
            }
        }
        Ok(())
    }

    /// Column line plus rows, as written after the header block.
    pub fn csv_body(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.csv_body().as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub tolerances: BTreeMap<&'static str, f64>,
    /// Deterministic run statistics (defects, fallbacks), never timings.
    pub diagnostics: BTreeMap<&'static str, f64>,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
}

impl ExperimentResult {
    pub fn new(spec: ExperimentSpec) -> Self {
        Self {
            spec,
            tolerances: BTreeMap::new(),
            diagnostics: BTreeMap::new(),
            checks: Vec::new(),
            tables: Vec::new(),
        }
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn table(&self, name: Option<&str>) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn file_stem(&self, table: &Table) -> String {
        match table.name {
            None => self.spec.command.to_string(),
            Some(n) => format!("{}_{n}", self.spec.command),
        }
    }
}

#[derive(Serialize)]
struct JsonDocument<'a> {
    artifact: &'a str,
    command: String,
    table: &'a str,
    spec: &'a ExperimentSpec,
    seed: u64,
    tolerances: &'a BTreeMap<&'static str, f64>,
    diagnostics: &'a BTreeMap<&'static str, f64>,
    checks: &'a [Check],
    content_sha256: String,
    columns: &'a [&'static str],
    rows: &'a [Vec<Cell>],
}

fn json_line<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data always serializes")
}

fn csv_document(result: &ExperimentResult, table: &Table) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# artifact: {ARTIFACT_VERSION}");
    let _ = writeln!(out, "# command: {}", result.spec.command);
    let _ = writeln!(out, "# table: {}", table.name.unwrap_or("main"));
    let _ = writeln!(out, "# spec: {}", json_line(&result.spec));
    let _ = writeln!(out, "# seed: {}", result.spec.seed);
    let _ = writeln!(out, "# tolerances: {}", json_line(&result.tolerances));
    let _ = writeln!(out, "# diagnostics: {}", json_line(&result.diagnostics));
    for c in &result.checks {
        let verdict = if c.passed { "pass" } else { "FAIL" };
        let _ = writeln!(out, "# check: {verdict} {} ({})", c.name, c.detail);
    }
    let _ = writeln!(out, "# content-sha256: {}", table.content_hash());
    out.push_str(&table.csv_body());
    out
}

fn json_document(result: &ExperimentResult, table: &Table) -> String {
    let doc = JsonDocument {
        artifact: ARTIFACT_VERSION,
        command: result.spec.command.to_string(),
        table: table.name.unwrap_or("main"),
        spec: &result.spec,
        seed: result.spec.seed,
        tolerances: &result.tolerances,
        diagnostics: &result.diagnostics,
        checks: &result.checks,
        content_sha256: table.content_hash(),
        columns: &table.columns,
        rows: &table.rows,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("plain data always serializes");
    s.push('\n');
    s
}

/// Renders one table in the requested format.
pub fn render(result: &ExperimentResult, table: &Table, format: Format) -> String {
    match format {
        Format::Csv => csv_document(result, table),
        Format::Json => json_document(result, table),
    }
}

/// Writes every table (and the plot script, if asked) into `dir`, returning
/// the paths in write order.
pub fn write_all(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    for t in &result.tables {
        t.check_finite()?;
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let format = result.spec.format;
    let mut written = Vec::new();
    for t in &result.tables {
        let path = dir.join(format!("{}.{}", result.file_stem(t), format.extension()));
        fs::write(&path, render(result, t, format)).map_err(|e| CliError::io(&path, e))?;
        written.push(path);
    }
    if result.spec.emit_plot
        && let Some(script) = crate::plot::script(result)
    {
        let path = dir.join(format!("{}.gp", result.spec.command));
        fs::write(&path, script).map_err(|e| CliError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
