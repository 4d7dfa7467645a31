use serde_json::{Map, Value};

use crate::config::Format;
use crate::CliError;

/// A floating point cell; non-finite values become the strings `inf`, `-inf`, `nan`.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or_else(|| {
        Value::String(
            if x.is_nan() {
                "nan"
            } else if x > 0.0 {
                "inf"
            } else {
                "-inf"
            }
            .into(),
        )
    })
}

pub fn opt(x: Option<f64>) -> Value {
    x.map(num).unwrap_or(Value::Null)
}

pub fn word(w: &[u8]) -> String {
    w.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(".")
}

/// One command's result: a table plus named summary values.
#[derive(Debug, Default)]
pub struct Artifact {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Value>>,
    pub summary: Map<String, Value>,
    /// Extra JSON-only sections.
    pub extra: Map<String, Value>,
}

impl Artifact {
    pub fn new(columns: &[&'static str]) -> Self {
        Artifact { columns: columns.to_vec(), ..Default::default() }
    }

    pub fn row(&mut self, cells: Vec<Value>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    pub fn note(&mut self, key: &str, v: impl Into<Value>) {
        self.summary.insert(key.into(), v.into());
    }

    pub fn render(&self, format: Format, config: &Value) -> Result<Vec<u8>, CliError> {
        match format {
            Format::Csv => self.csv(),
            Format::Json => {
                let cols = Value::from(self.columns.clone());
                let mut doc = Map::new();
                doc.insert("config".into(), config.clone());
                doc.insert("summary".into(), Value::Object(self.summary.clone()));
                doc.insert("columns".into(), cols);
                doc.insert("rows".into(), Value::from(self.rows.clone()));
                for (k, v) in &self.extra {
                    doc.insert(k.clone(), v.clone());
                }
                let mut out = serde_json::to_vec_pretty(&Value::Object(doc)).map_err(|e| CliError::Io(e.to_string()))?;
                out.push(b'\n');
                Ok(out)
            }
        }
    }

    fn csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io(e.to_string());
        w.write_record(&self.columns).map_err(io)?;
        for r in &self.rows {
            w.write_record(r.iter().map(cell)).map_err(io)?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    }

    /// `key: value` lines for the terminal.
    pub fn summary_text(&self) -> String {
        self.summary.iter().map(|(k, v)| format!("{k}: {}\n", cell(v))).collect()
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_plain_cells() {
        let mut a = Artifact::new(&["n", "value", "name"]);
        a.row(vec![1.into(), num(f64::INFINITY), "x,y".into()]);
        a.row(vec![2.into(), num(0.5), Value::Null]);
        let text = String::from_utf8(a.render(Format::Csv, &Value::Null).unwrap()).unwrap();
        assert_eq!(text, "n,value,name\n1,inf,\"x,y\"\n2,0.5,\n");
    }

    #[test]
    fn json_carries_config_and_summary() {
        let mut a = Artifact::new(&["n"]);
        a.note("h", 0.25);
        let doc: Value = serde_json::from_slice(&a.render(Format::Json, &Value::from("cfg")).unwrap()).unwrap();
        assert_eq!(doc["config"], "cfg");
        assert_eq!(doc["summary"]["h"], 0.25);
    }
}
