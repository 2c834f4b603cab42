//! CSV tables with a commented provenance header.
//!
//! Floats are written with 17 significant digits so every value parses back
//! to the same `f64`. Header lines start with `#`; the only line that varies
//! between identical runs is the `# generated-at` line, which
//! `deterministic` suppresses.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Float(x) => format_float(*x),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Float)
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

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

/// 17 significant digits in scientific notation.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| *c == name)
    }

    /// Values of a float column, `NaN` for anything else.
    pub fn floats(&self, name: &str) -> Vec<f64> {
        let Some(j) = self.column(name) else { return Vec::new() };
        self.rows
            .iter()
            .map(|r| match r[j] {
                Cell::Float(x) => x,
                Cell::Int(n) => n as f64,
                _ => f64::NAN,
            })
            .collect()
    }
}

/// Identifies the run that produced a table.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub subcommand: String,
    pub seed: u64,
    pub config_toml: String,
    pub deterministic: bool,
}

impl Provenance {
    pub fn header(&self) -> String {
        let mut s = format!(
            "# hmc-tune {} {}\n# seed = {}\n",
            env!("CARGO_PKG_VERSION"),
            self.subcommand,
            self.seed
        );
        if !self.deterministic {
            let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
            s.push_str(&format!("# generated-at = {secs} (unix seconds)\n"));
        }
        s.push_str("# config:\n");
        for line in self.config_toml.lines() {
            s.push_str("#   ");
            s.push_str(line);
            s.push('\n');
        }
        s
    }
}

pub fn render_csv(table: &Table, provenance: &Provenance) -> Result<Vec<u8>, CliError> {
    let mut buf = provenance.header().into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(&table.columns)?;
        for row in &table.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()?;
    }
    Ok(buf)
}

pub fn write_csv(dir: &Path, stem: &str, table: &Table, provenance: &Provenance) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(format!("{stem}.csv"));
    fs::write(&path, render_csv(table, provenance)?)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

/// Reads a table written by [`write_csv`], skipping comment lines.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<Result<_, _>>()?;
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prov(deterministic: bool) -> Provenance {
        Provenance {
            subcommand: "tune".into(),
            seed: 3,
            config_toml: "seed = 3\n[tune]\nn = 5\n".into(),
            deterministic,
        }
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.6512598] {
            assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        }
        assert!(format_float(f64::NAN).parse::<f64>().unwrap().is_nan());
    }

    #[test]
    fn header_and_body() {
        let mut t = Table::new(&["a", "n", "ok", "note"]);
        t.push(vec![0.5.into(), 3usize.into(), true.into(), Cell::Empty]);
        let text = String::from_utf8(render_csv(&t, &prov(true)).unwrap()).unwrap();
        assert!(text.starts_with("# hmc-tune"));
        assert!(!text.contains("generated-at"));
        assert!(text.contains("#   [tune]"));
        assert!(text.ends_with("a,n,ok,note\n5.0000000000000000e-1,3,true,\n"));
        let stamped = String::from_utf8(render_csv(&t, &prov(false)).unwrap()).unwrap();
        assert!(stamped.contains("# generated-at"));
    }

    #[test]
    fn written_tables_parse_back() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new(&["x", "label"]);
        t.push(vec![(1.0f64 / 7.0).into(), "a,b".into()]);
        let path = write_csv(dir.path(), "t", &t, &prov(true)).unwrap();
        let (header, rows) = read_csv(&path).unwrap();
        assert_eq!(header, vec!["x", "label"]);
        assert_eq!(rows[0][0].parse::<f64>().unwrap(), 1.0 / 7.0);
        assert_eq!(rows[0][1], "a,b");
    }
}
