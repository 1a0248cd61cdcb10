use std::fs;
use std::path::{Path, PathBuf};

use crate::manifest::RunManifest;
use crate::{CliError, Format};

/// A named table of already formatted cells.
#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.to_string(), header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn with_header(name: &str, header: Vec<String>) -> Self {
        Self { name: name.to_string(), header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn csv(&self, manifest: &RunManifest) -> Result<String, CliError> {
        let mut out = String::new();
        for line in manifest.lines(false) {
            out.push_str("# ");
            out.push_str(&line);
            out.push('\n');
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(CliError::csv)?;
        for row in &self.rows {
            w.write_record(row).map_err(CliError::csv)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::csv(e.into_error()))?;
        out.push_str(&String::from_utf8(bytes).expect("utf-8 cells"));
        Ok(out)
    }

    fn text(&self, manifest: &RunManifest) -> String {
        let mut out = String::new();
        for line in manifest.lines(true) {
            out.push_str(&line);
            out.push('\n');
        }
        out.push('\n');
        let widths: Vec<usize> = (0..self.header.len())
            .map(|c| self.rows.iter().map(|r| r[c].len()).chain([self.header[c].len()]).max().unwrap_or(0))
            .collect();
        let line = |cells: &[String]| {
            let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            padded.join("  ").trim_end().to_string() + "\n"
        };
        out.push_str(&line(&self.header));
        for row in &self.rows {
            out.push_str(&line(row));
        }
        out
    }

    /// Writes `<out>/<name>.csv` or `<out>/<name>.txt`.
    pub fn write(&self, out: &Path, format: Format, manifest: &RunManifest) -> Result<PathBuf, CliError> {
        let (ext, body) = match format {
            Format::Csv => ("csv", self.csv(manifest)?),
            Format::Text => ("txt", self.text(manifest)),
        };
        let path = out.join(format!("{}.{ext}", self.name));
        fs::write(&path, body).map_err(|e| CliError::output(&path, e))?;
        Ok(path)
    }
}

/// Shortest round-trip decimal form.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn sign(v: i8) -> &'static str {
    if v > 0 {
        "+"
    } else {
        "-"
    }
}
