//! Versioned spec files, result tables and run manifests.
//!
//! A spec file is a JSON object `{"schema", "sha256", "payload"}`. The hash
//! covers the payload bytes exactly as stored. Result tables are written as
//! CSV, whose first line is `# manifest=<file>`, and as JSON with the same
//! numbers formatted identically (`{:.16e}`, 17 significant digits).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nested::NestedSpec;
use crate::polar::CodeSpec;

/// Types stored in versioned spec files.
pub trait Persist: Serialize + DeserializeOwned {
    const SCHEMA: &'static str;
}

impl Persist for CodeSpec {
    const SCHEMA: &'static str = "polarq/code-spec/1";
}

impl Persist for NestedSpec {
    const SCHEMA: &'static str = "polarq/nested-spec/1";
}

#[derive(Serialize, Deserialize)]
struct Envelope<'a> {
    schema: String,
    sha256: String,
    #[serde(borrow)]
    payload: &'a RawValue,
}

/// Serializes a spec with its schema id and payload hash.
pub fn spec_to_bytes<T: Persist>(spec: &T) -> Result<Vec<u8>> {
    let payload = serde_json::to_string(spec)?;
    let sha256 = hex::encode(Sha256::digest(payload.as_bytes()));
    let raw = RawValue::from_string(payload)?;
    let env = Envelope { schema: T::SCHEMA.to_string(), sha256, payload: &raw };
    let mut out = serde_json::to_vec(&env)?;
    out.push(b'\n');
    Ok(out)
}

/// Parses bytes written by [`spec_to_bytes`], checking schema and hash.
pub fn spec_from_bytes<T: Persist>(bytes: &[u8]) -> Result<T> {
    let env: Envelope = serde_json::from_slice(bytes)?;
    if env.schema != T::SCHEMA {
        return Err(Error::Version { found: env.schema, expected: T::SCHEMA.to_string() });
    }
    let computed = hex::encode(Sha256::digest(env.payload.get().as_bytes()));
    if computed != env.sha256 {
        return Err(Error::Hash { stored: env.sha256, computed });
    }
    Ok(serde_json::from_str(env.payload.get())?)
}

pub fn save_spec<T: Persist>(spec: &T, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, spec_to_bytes(spec)?)?;
    Ok(())
}

pub fn load_spec<T: Persist>(path: impl AsRef<Path>) -> Result<T> {
    spec_from_bytes(&fs::read(path)?)
}

/// One table cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// Float text shared by both formats.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Float(v) => format_float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> String {
        match self {
            Cell::Float(v) if v.is_finite() => format_float(*v),
            Cell::Float(_) => "null".into(),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => serde_json::to_string(s).expect("string serializes"),
        }
    }
}

/// A result table with a fixed column order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Precondition(format!("row has {} cells, table has {} columns", row.len(), self.columns.len())));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn to_csv(&self, manifest: &str) -> String {
        let mut s = format!("# manifest={manifest}\n{}\n", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self, manifest: &str) -> String {
        let mut s = String::new();
        let _ = write!(s, "{{\"manifest\":{},\"columns\":{},\"rows\":[", serde_json::to_string(manifest).expect("str"), serde_json::to_string(&self.columns).expect("strings"));
        for (k, row) in self.rows.iter().enumerate() {
            if k > 0 {
                s.push(',');
            }
            s.push('{');
            for (j, (c, v)) in self.columns.iter().zip(row).enumerate() {
                if j > 0 {
                    s.push(',');
                }
                let _ = write!(s, "{}:{}", serde_json::to_string(c).expect("str"), v.json());
            }
            s.push('}');
        }
        s.push_str("]}\n");
        s
    }
}

/// Output format of [`write_results`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Writes a table referencing the manifest at `manifest`.
pub fn write_results(table: &Table, format: Format, path: impl AsRef<Path>, manifest: &str) -> Result<()> {
    let body = match format {
        Format::Csv => table.to_csv(manifest),
        Format::Json => table.to_json(manifest),
    };
    fs::write(path, body)?;
    Ok(())
}

/// Record of one command invocation. Only `wall_clock_seconds` varies between identical runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub version: String,
    pub wall_clock_seconds: f64,
    pub results: Vec<PathBuf>,
    /// Command line that reproduces the run, without the program name or worker count.
    #[serde(default)]
    pub argv: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            config,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_seconds: 0.0,
            results: Vec::new(),
            argv: Vec::new(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_is_header_only() {
        let t = Table::new(&["a", "b"]);
        assert_eq!(t.to_csv("m.json"), "# manifest=m.json\na,b\n");
        assert!(t.to_json("m.json").contains("\"rows\":[]"));
    }

    #[test]
    fn formats_share_numbers() {
        let mut t = Table::new(&["x", "n", "name"]);
        t.push(vec![0.1.into(), 3usize.into(), "p,q".into()]).unwrap();
        let csv = t.to_csv("m");
        let json = t.to_json("m");
        let text = format_float(0.1);
        assert!(csv.contains(&text) && json.contains(&text));
        assert_eq!(text.parse::<f64>().unwrap(), 0.1);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["rows"][0]["x"].as_f64(), Some(0.1));
        assert_eq!(v["rows"][0]["name"], "p,q");
        assert!(csv.contains("\"p,q\""));
        assert!(t.push(vec![1.0.into()]).is_err());
    }

    #[test]
    fn seventeen_significant_digits() {
        let s = format_float(std::f64::consts::PI);
        assert_eq!(s.split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
    }
}
