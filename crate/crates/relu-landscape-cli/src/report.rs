//! Report emission: tabular records rendered as CSV (17 significant digits,
//! LF line endings) or JSON (same fields keyed by column, plus an optional
//! timestamp), written to stdout or atomically to a file.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format '{other}' (expected csv or json)")),
        }
    }
}

/// One table cell. `Num` renders with 17 significant digits in CSV and as a
/// plain number in JSON; `Empty` renders as an empty CSV field and JSON null.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Num(f64),
    Int(i64),
    Empty,
}

impl Cell {
    pub fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    fn csv(&self) -> String {
        match self {
            // Column labels never contain commas or quotes, so no escaping
            // layer is needed to keep the output byte-stable.
            Cell::Text(s) => s.clone(),
            Cell::Num(v) => format!("{v:.16e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Text(s) => serde_json::Value::String(s.clone()),
            Cell::Num(v) => serde_json::Number::from_f64(*v)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            Cell::Int(v) => serde_json::Value::from(*v),
            Cell::Empty => serde_json::Value::Null,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub command: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Report {
    pub fn new(command: &'static str, columns: Vec<&'static str>) -> Self {
        Report { command, columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let fields: Vec<String> = row.iter().map(Cell::csv).collect();
            let _ = writeln!(out, "{}", fields.join(","));
        }
        out
    }

    pub fn to_json(&self, timestamp: Option<String>) -> String {
        let records: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|row| {
                let fields: serde_json::Map<String, serde_json::Value> = self
                    .columns
                    .iter()
                    .zip(row)
                    .map(|(c, cell)| (c.to_string(), cell.json()))
                    .collect();
                serde_json::Value::Object(fields)
            })
            .collect();
        let mut doc = serde_json::Map::new();
        doc.insert("command".into(), serde_json::Value::String(self.command.into()));
        if let Some(ts) = timestamp {
            doc.insert("timestamp".into(), serde_json::Value::String(ts));
        }
        doc.insert("records".into(), serde_json::Value::Array(records));
        let mut text = serde_json::to_string_pretty(&serde_json::Value::Object(doc))
            .expect("report values are finite");
        text.push('\n');
        text
    }
}

/// Write through a sibling temp file and rename, so readers never observe a
/// partially written report.
pub fn write_atomic(path: &Path, content: &str) -> io::Result<()> {
    let mut tmp: PathBuf = path.to_path_buf();
    let name = match path.file_name() {
        Some(n) => n.to_os_string(),
        None => {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("output path {} has no file name", path.display()),
            ))
        }
    };
    let mut tmp_name = name;
    tmp_name.push(".tmp");
    tmp.set_file_name(tmp_name);
    fs::write(&tmp, content)?;
    fs::rename(&tmp, path)
}

pub fn emit(
    report: &Report,
    format: Format,
    output: Option<&Path>,
    no_timestamp: bool,
) -> Result<(), CliError> {
    let text = match format {
        Format::Csv => report.to_csv(),
        Format::Json => {
            let ts = (!no_timestamp).then(|| {
                chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
            });
            report.to_json(ts)
        }
    };
    match output {
        Some(path) => write_atomic(path, &text)
            .map_err(|e| CliError::Numeric(format!("writing {}: {e}", path.display()))),
        None => {
            // A broken pipe means the reader went away; the report ends
            // there without error.
            match io::stdout().write_all(text.as_bytes()) {
                Err(e) if e.kind() != io::ErrorKind::BrokenPipe => {
                    Err(CliError::Numeric(format!("writing stdout: {e}")))
                }
                _ => Ok(()),
            }
        }
    }
}
