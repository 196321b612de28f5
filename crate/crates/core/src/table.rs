//! Plot-ready tables: `#`-prefixed header lines (title, parameters, column
//! names) followed by comma-separated numeric rows. Floats are written with
//! 17 significant digits; missing values are written as `nan`.

use std::io::Write;

use serde_json::{json, Map, Value as Json};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// 17 significant digits, scientific notation.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

pub fn parse_f64(s: &str) -> Option<f64> {
    match s.trim() {
        "nan" | "NaN" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        v => v.parse().ok(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Float(f64),
    Int(u64),
    Missing,
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}
impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::Int(v)
    }
}
impl From<Option<f64>> for Value {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Value::Missing, Value::Float)
    }
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Float(v) if !v.is_nan() => Some(v),
            Value::Int(v) => Some(v as f64),
            _ => None,
        }
    }

    fn render(&self) -> String {
        match *self {
            Value::Float(v) => fmt_f64(v),
            Value::Int(v) => v.to_string(),
            Value::Missing => "nan".to_string(),
        }
    }

    fn to_json(self) -> Json {
        match self {
            Value::Float(v) if v.is_finite() => json!(v),
            Value::Int(v) => json!(v),
            _ => Json::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub title: String,
    pub params: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(title: &str, columns: &[&str]) -> Self {
        Self {
            title: title.to_string(),
            params: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Writes the table; `preamble` lines (already without `#`) go right
    /// after the title.
    pub fn write_csv<W: Write>(&self, mut w: W, preamble: &[String]) -> std::io::Result<()> {
        writeln!(w, "# tickwarp {}", self.title)?;
        for line in preamble {
            writeln!(w, "# {line}")?;
        }
        for (k, v) in &self.params {
            writeln!(w, "# {k} = {v}")?;
        }
        writeln!(w, "# columns: {}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Value::render).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    /// One JSON object per line: a metadata record, then one record per row.
    pub fn write_json_lines<W: Write>(&self, mut w: W, preamble: &[String]) -> std::io::Result<()> {
        let mut params = Map::new();
        for (k, v) in &self.params {
            params.insert(k.clone(), Json::String(v.clone()));
        }
        let meta = json!({
            "table": self.title,
            "preamble": preamble,
            "params": params,
            "columns": self.columns,
        });
        writeln!(w, "{meta}")?;
        for row in &self.rows {
            let mut rec = Map::new();
            for (c, v) in self.columns.iter().zip(row) {
                rec.insert(c.clone(), v.to_json());
            }
            writeln!(w, "{}", Json::Object(rec))?;
        }
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<Self, TableError> {
        let mut t = Table::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                let h = h.trim();
                if let Some(title) = h.strip_prefix("tickwarp ") {
                    if t.title.is_empty() {
                        t.title = title.to_string();
                    }
                } else if let Some(cols) = h.strip_prefix("columns:") {
                    t.columns = cols.split(',').map(|c| c.trim().to_string()).collect();
                } else if let Some((k, v)) = h.split_once('=') {
                    t.params.push((k.trim().to_string(), v.trim().to_string()));
                }
                continue;
            }
            let row = line
                .split(',')
                .map(|cell| {
                    let cell = cell.trim();
                    if let Ok(v) = cell.parse::<u64>() {
                        return Ok(Value::Int(v));
                    }
                    match parse_f64(cell) {
                        Some(v) if v.is_nan() => Ok(Value::Missing),
                        Some(v) => Ok(Value::Float(v)),
                        None => Err(TableError::Parse { line: i + 1, message: format!("bad number {cell:?}") }),
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            if !t.columns.is_empty() && row.len() != t.columns.len() {
                return Err(TableError::Parse {
                    line: i + 1,
                    message: format!("expected {} cells, got {}", t.columns.len(), row.len()),
                });
            }
            t.rows.push(row);
        }
        Ok(t)
    }

    pub fn column(&self, name: &str) -> Result<Vec<Option<f64>>, TableError> {
        let idx = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| TableError::MissingColumn(name.to_string()))?;
        Ok(self.rows.iter().map(|r| r[idx].as_f64()).collect())
    }

    pub fn get_param(&self, key: &str) -> Option<&str> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(f64::NAN), "nan");
    }

    #[test]
    fn csv_round_trip() {
        let mut t = Table::new("demo", &["x", "y", "n"]).param("slot_width", 24.5);
        t.push(vec![1.5.into(), Value::Missing, 3u64.into()]);
        t.push(vec![(-2e-9).into(), 0.25.into(), 0u64.into()]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf, &["version = 0".into()]).unwrap();
        let back = Table::read_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.title, "demo");
        assert_eq!(back.columns, t.columns);
        assert_eq!(back.get_param("slot_width"), Some("24.5"));
        assert_eq!(back.column("y").unwrap(), vec![None, Some(0.25)]);
        assert_eq!(back.column("n").unwrap(), vec![Some(3.0), Some(0.0)]);
    }

    #[test]
    fn json_lines_have_one_record_per_row() {
        let mut t = Table::new("demo", &["x"]);
        t.push(vec![Value::Missing]);
        t.push(vec![2.0.into()]);
        let mut buf = Vec::new();
        t.write_json_lines(&mut buf, &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], r#"{"x":null}"#);
        assert_eq!(lines[2], r#"{"x":2.0}"#);
    }

    proptest! {
        #[test]
        fn float_text_round_trip(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            prop_assert_eq!(parse_f64(&fmt_f64(x)).unwrap().to_bits(), x.to_bits());
        }
    }
}
