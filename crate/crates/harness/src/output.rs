//! CSV tables and run manifests.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use fspde_core::path::format_decimal;

/// A CSV cell; floats are written with 17 significant digits.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(x) => format_decimal(*x),
            Cell::Int(n) => n.to_string(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n as u64)
    }
}

impl From<u64> for Cell {
    fn from(n: u64) -> Self {
        Cell::Int(n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File stem.
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// CSV text with a leading `# config_hash: …` comment.
    pub fn to_csv(&self, config_hash: &str) -> io::Result<Vec<u8>> {
        let mut out = format!("# config_hash: {config_hash}\n").into_bytes();
        {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut out);
            w.write_record(&self.header)?;
            for row in &self.rows {
                w.write_record(row.iter().map(Cell::render))?;
            }
            w.flush()?;
        }
        Ok(out)
    }
}

/// Writes `table` to `path`, embedding the config hash in a header comment.
pub fn write_csv(path: &Path, table: &Table, config_hash: &str) -> io::Result<()> {
    fs::write(path, table.to_csv(config_hash)?)
}

/// Header, rows as floats, and the embedded config hash of a file written by [`write_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct CsvContents {
    pub config_hash: Option<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_csv(path: &Path) -> io::Result<CsvContents> {
    let text = fs::read_to_string(path)?;
    let config_hash = text
        .lines()
        .find_map(|l| l.strip_prefix("# config_hash: "))
        .map(str::to_string);
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)))
            .collect::<io::Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(CsvContents {
        config_hash,
        header,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: String,
    pub pass: bool,
    pub detail: String,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.id, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: String,
    pub config_hash: String,
    pub toolkit_version: String,
    pub seed: u64,
    pub threads: usize,
    pub wall_time_s: f64,
    pub criteria: Vec<CriterionResult>,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.pass)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_is_header_only() {
        let t = Table::new("x", &["a", "b"]);
        let text = String::from_utf8(t.to_csv("abc").unwrap()).unwrap();
        assert_eq!(text, "# config_hash: abc\na,b\n");
    }

    #[test]
    fn round_trip_preserves_values_and_hash() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new("x", &["eps", "error", "n_rep"]);
        t.push(vec![0.1.into(), (1.0f64 / 3.0).into(), 200usize.into()]);
        t.push(vec![0.05.into(), std::f64::consts::PI.into(), 7usize.into()]);
        let p = dir.path().join("x.csv");
        write_csv(&p, &t, "deadbeef").unwrap();
        let back = read_csv(&p).unwrap();
        assert_eq!(back.config_hash.as_deref(), Some("deadbeef"));
        assert_eq!(back.header, t.header);
        assert_eq!(back.rows[0], vec![0.1, 1.0 / 3.0, 200.0]);
        assert_eq!(back.rows[1][1], std::f64::consts::PI);
    }
}
