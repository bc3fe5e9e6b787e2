use std::io::Write;

use serde::Serialize;
use serde_json::{json, Value};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl Cell {
    pub fn opt(value: Option<f64>) -> Cell {
        value.map_or(Cell::Empty, Cell::Float)
    }

    pub fn text(s: impl Into<String>) -> Cell {
        Cell::Text(s.into())
    }

    fn csv(&self) -> String {
        match self {
            Cell::Float(x) => format_float(*x),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Float(x) if x.is_finite() => json!(x),
            Cell::Float(_) | Cell::Empty => Value::Null,
            Cell::Int(n) => json!(n),
            Cell::Text(s) => json!(s),
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

/// 17 significant digits in exponent notation.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: Value,
    pub wall_clock_seconds: f64,
    pub rows_with_errors: usize,
}

#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    /// Rows whose `error` column is filled.
    pub fn error_count(&self) -> usize {
        match self.columns.iter().position(|c| *c == "error") {
            Some(i) => self.rows.iter().filter(|r| !matches!(&r[i], Cell::Empty)).count(),
            None => 0,
        }
    }

    pub fn write_csv(&self, out: &mut dyn Write, provenance: &Provenance) -> Result<(), CliError> {
        writeln!(out, "# {} {}", provenance.tool, provenance.version)?;
        writeln!(out, "# command: {}", provenance.command)?;
        writeln!(out, "# config: {}", provenance.config)?;
        writeln!(out, "# wall_clock_seconds: {:.3}", provenance.wall_clock_seconds)?;
        writeln!(out, "# rows_with_errors: {}", provenance.rows_with_errors)?;
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(&self.columns)?;
        for row in &self.rows {
            writer.write_record(row.iter().map(Cell::csv))?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn write_json(&self, out: &mut dyn Write, provenance: &Provenance) -> Result<(), CliError> {
        let rows: Vec<Value> = self.rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect();
        let doc = json!({
            "columns": self.columns,
            "rows": rows,
            "provenance": provenance,
        });
        serde_json::to_writer_pretty(&mut *out, &doc).map_err(|e| CliError::Io(e.into()))?;
        writeln!(out)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [48.0, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.1 + 0.2] {
            let s = format_float(x);
            assert!(s.contains('e') && !s.contains('E'));
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(format_float(f64::NAN), "NaN");
    }

    #[test]
    fn csv_quotes_text_fields() {
        let mut t = Table::new(vec!["x", "error"]);
        t.push(vec![Cell::Float(1.0), Cell::text("domain error: a, b")]);
        let prov = Provenance {
            tool: "phasediff".into(),
            version: "0".into(),
            command: "qfi".into(),
            config: json!({}),
            wall_clock_seconds: 0.0,
            rows_with_errors: 1,
        };
        let mut buf = Vec::new();
        t.write_csv(&mut buf, &prov).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.ends_with("x,error\n1.0000000000000000e0,\"domain error: a, b\"\n"));
        assert_eq!(t.error_count(), 1);
    }
}
