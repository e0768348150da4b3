use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Map, Value};

use mgp::scenario::Scenario;
use mgp::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// A cell in an output table.
#[derive(Debug, Clone)]
pub enum Cell {
    F(f64),
    U(u64),
    S(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::U(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::U(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::S(v)
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            // both forms print the shortest string that round-trips
            Cell::F(v) if *v != 0.0 && (v.abs() < 1e-4 || v.abs() >= 1e15) => format!("{v:e}"),
            Cell::F(v) => v.to_string(),
            Cell::U(v) => v.to_string(),
            Cell::S(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::S(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::F(v) if v.is_finite() => json!(v),
            Cell::F(v) => json!(v.to_string()),
            Cell::U(v) => json!(v),
            Cell::S(s) => json!(s),
        }
    }
}

macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$($crate::cli::output::Cell::from($x)),*] };
}
pub(crate) use row;

pub struct Table {
    pub name: &'static str,
    pub columns: &'static [&'static str],
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &'static str, columns: &'static [&'static str]) -> Self {
        Table {
            name,
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "{}", self.name);
        self.rows.push(row);
    }
}

/// Version of every table layout; bump when a column changes.
pub const SCHEMA_VERSION: u32 = 1;

/// Output directory plus the bookkeeping that ends up in the manifest.
pub struct Output {
    dir: PathBuf,
    format: Format,
    files: Vec<String>,
    started: Instant,
    started_unix: f64,
}

impl Output {
    pub fn create(dir: &Path, format: Format) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            format,
            files: Vec::new(),
            started: Instant::now(),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64()),
        })
    }

    fn open(&mut self, file: String) -> Result<BufWriter<File>> {
        let path = self.dir.join(&file);
        let f = File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.files.push(file);
        Ok(BufWriter::new(f))
    }

    /// CSV with a `# schema` comment line, or a JSON array of records.
    pub fn table(&mut self, table: &Table) -> Result<()> {
        match self.format {
            Format::Csv => {
                let mut w = self.open(format!("{}.csv", table.name))?;
                writeln!(w, "# schema: mgp-{}/{SCHEMA_VERSION}", table.name)?;
                writeln!(w, "{}", table.columns.join(","))?;
                for r in &table.rows {
                    let line: Vec<String> = r.iter().map(Cell::csv).collect();
                    writeln!(w, "{}", line.join(","))?;
                }
                w.flush()?;
            }
            Format::Json => {
                let rows: Vec<Value> = table
                    .rows
                    .iter()
                    .map(|r| {
                        let m: Map<String, Value> =
                            table.columns.iter().zip(r).map(|(c, v)| (c.to_string(), v.json())).collect();
                        Value::Object(m)
                    })
                    .collect();
                let doc = json!({
                    "schema": format!("mgp-{}/{SCHEMA_VERSION}", table.name),
                    "columns": table.columns,
                    "rows": rows,
                });
                self.json_file(&format!("{}.json", table.name), &doc)?;
            }
        }
        Ok(())
    }

    /// A JSON report, written regardless of `--format`.
    pub fn report<T: Serialize>(&mut self, name: &str, schema: &str, value: &T) -> Result<()> {
        let mut v = serde_json::to_value(value).map_err(|e| Error::Io(e.to_string()))?;
        if let Value::Object(m) = &mut v {
            m.insert("schema".into(), json!(format!("mgp-{schema}/{SCHEMA_VERSION}")));
        }
        self.json_file(&format!("{name}.json"), &v)
    }

    fn json_file(&mut self, file: &str, v: &Value) -> Result<()> {
        let mut w = self.open(file.to_string())?;
        serde_json::to_writer_pretty(&mut w, v).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn text(&mut self, file: &str, write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
        let mut w = self.open(file.to_string())?;
        write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Writes `manifest.json` listing everything produced so far.
    pub fn finish(mut self, manifest: ManifestInfo<'_>) -> Result<()> {
        let files = std::mem::take(&mut self.files);
        let doc = json!({
            "schema": format!("mgp-manifest/{SCHEMA_VERSION}"),
            "tool": "mgp",
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": manifest.subcommand,
            "argv": std::env::args().collect::<Vec<_>>(),
            "scenario": manifest.scenario_source,
            "resolved": manifest.scenario,
            "parameters": manifest.parameters,
            "out_dir": self.dir.display().to_string(),
            "format": self.format,
            "seed": manifest.seed,
            "started_unix": self.started_unix,
            "wall_seconds": self.started.elapsed().as_secs_f64(),
            "threads": rayon::current_num_threads(),
            "files": files,
        });
        self.json_file("manifest.json", &doc)
    }
}

pub struct ManifestInfo<'a> {
    pub subcommand: &'a str,
    pub scenario_source: Option<&'a str>,
    pub scenario: Option<&'a Scenario>,
    pub parameters: Value,
    pub seed: Option<u64>,
}
