//! Deterministic tabular output: CSV with a fixed column order, or JSON
//! mirroring the columns as arrays. Identical inputs serialize to identical
//! bytes, which the golden-file tests rely on.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

/// One table cell. `Empty` renders as an empty CSV field / JSON `null`
/// (used for analytic columns at unstable grid points).
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        if v.is_nan() {
            Cell::Empty
        } else {
            Cell::Float(v)
        }
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::from)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    headers: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(headers: Vec<&'static str>) -> Self {
        Self {
            headers,
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.headers.len(), "row width mismatch");
        self.rows.push(row);
    }

    pub fn headers(&self) -> &[&'static str] {
        &self.headers
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    /// `.` decimal separator, `,` field separator, LF endings, header always
    /// present. Floats print in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.headers.join(","));
        out.push('\n');
        for row in &self.rows {
            let fields: Vec<String> = row.iter().map(render_csv_cell).collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    /// Column-oriented JSON: `{"col": [v, ...], ...}` in column order.
    pub fn to_json(&self) -> String {
        let mut map = serde_json::Map::new();
        for (idx, header) in self.headers.iter().enumerate() {
            let values: Vec<serde_json::Value> = self
                .rows
                .iter()
                .map(|row| match &row[idx] {
                    Cell::Float(v) => serde_json::Number::from_f64(*v)
                        .map(serde_json::Value::Number)
                        .unwrap_or(serde_json::Value::Null),
                    Cell::Int(v) => serde_json::Value::from(*v),
                    Cell::Text(v) => serde_json::Value::from(v.clone()),
                    Cell::Empty => serde_json::Value::Null,
                })
                .collect();
            map.insert((*header).to_string(), serde_json::Value::Array(values));
        }
        let mut text = serde_json::to_string_pretty(&map).expect("tables always serialize");
        text.push('\n');
        text
    }

    pub fn render(&self, format: crate::config::OutputFormat) -> String {
        match format {
            crate::config::OutputFormat::Csv => self.to_csv(),
            crate::config::OutputFormat::Json => self.to_json(),
        }
    }
}

fn render_csv_cell(cell: &Cell) -> String {
    match cell {
        Cell::Float(v) => format!("{v}"),
        Cell::Int(v) => format!("{v}"),
        Cell::Text(v) => v.clone(),
        Cell::Empty => String::new(),
    }
}

/// Writes to the path, or stdout when no path is given.
pub fn write_output(path: Option<&Path>, content: &str) -> io::Result<()> {
    match path {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            w.write_all(content.as_bytes())?;
            w.flush()
        }
        None => io::stdout().write_all(content.as_bytes()),
    }
}
