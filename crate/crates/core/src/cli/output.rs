//! CSV and JSON artifact writers. Every file carries the resolved config and its hash.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use super::config::RunConfig;

pub const UNITS: &str =
    "energies and frequencies in model units (hbar = 1, couplings as configured, J4 = 1 by default); \
                         times in tau = 1/(gamma J) unless a column says otherwise";

/// Line-oriented CSV writer with `#` preamble lines ahead of the header row.
pub struct CsvWriter {
    inner: BufWriter<File>,
}

impl CsvWriter {
    pub fn create(path: &Path, cfg: &RunConfig, header: &str) -> io::Result<Self> {
        let mut inner = BufWriter::new(File::create(path)?);
        writeln!(inner, "# cwmeter {} scenario={}", env!("CARGO_PKG_VERSION"), cfg.scenario)?;
        writeln!(inner, "# config_sha256={}", cfg.hash())?;
        writeln!(inner, "# config={}", serde_json::to_string(&cfg.to_json()).expect("config serializes"))?;
        writeln!(inner, "# units: {UNITS}")?;
        writeln!(inner, "{header}")?;
        Ok(Self { inner })
    }

    pub fn row(&mut self, values: &[f64]) -> io::Result<()> {
        let mut first = true;
        for v in values {
            if !first {
                self.inner.write_all(b",")?;
            }
            first = false;
            write!(self.inner, "{v:?}")?;
        }
        self.inner.write_all(b"\n")
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// Writes `data` (which must serialize to an object) with `config` and `config_sha256` added.
pub fn write_json(path: &Path, cfg: &RunConfig, data: &impl Serialize) -> io::Result<()> {
    let mut obj = match serde_json::to_value(data).map_err(io::Error::other)? {
        Value::Object(m) => m,
        other => {
            let mut m = Map::new();
            m.insert("data".into(), other);
            m
        }
    };
    obj.insert("scenario".into(), Value::String(cfg.scenario.to_string()));
    obj.insert("config".into(), cfg.to_json());
    obj.insert("config_sha256".into(), Value::String(cfg.hash()));
    obj.insert("units".into(), Value::String(UNITS.into()));
    let mut text = serde_json::to_string_pretty(&Value::Object(obj)).map_err(io::Error::other)?;
    text.push('\n');
    std::fs::write(path, text)
}

/// Reads a CSV written by [`CsvWriter`]: skips the preamble and returns the header and rows.
pub fn read_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), String> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<String> = lines.next().ok_or("missing header row")?.split(',').map(str::to_string).collect();
    let rows = lines
        .enumerate()
        .map(|(i, l)| {
            let row: Vec<f64> = l
                .split(',')
                .map(|v| v.parse::<f64>().map_err(|e| format!("row {}: {e}", i + 1)))
                .collect::<Result<_, _>>()?;
            if row.len() != header.len() {
                return Err(format!("row {} has {} fields, header has {}", i + 1, row.len(), header.len()));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok((header, rows))
}
