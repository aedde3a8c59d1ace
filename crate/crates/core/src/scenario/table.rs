//! Result tables and their CSV / JSON serialisation.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{DdError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Value {
    Text(String),
    Int(i64),
    Float(f64),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(x) => Some(*x),
            Value::Text(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Text(s) => f.write_str(s),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) if x.is_nan() => f.write_str("nan"),
            Value::Float(x) if x.is_infinite() => f.write_str(if *x > 0.0 { "inf" } else { "-inf" }),
            Value::Float(x) => write!(f, "{x}"),
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Float(x)
    }
}

impl From<usize> for Value {
    fn from(i: usize) -> Self {
        Value::Int(i as i64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub scenario: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Provenance {
    pub fn new(scenario: &str, config_hash: &str, seed: u64) -> Self {
        Provenance {
            scenario: scenario.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            version: concat!("ddsim ", env!("CARGO_PKG_VERSION")).to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = DdError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(DdError::Config(format!("unknown output format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    /// Short name; the first table of a run is written to the output path and
    /// the rest beside it as `<stem>.<name>.<ext>`.
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    pub provenance: Option<Provenance>,
}

impl ResultTable {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        ResultTable {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            provenance: None,
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.columns.len(), "row width does not match the {} schema", self.name);
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| DdError::invalid(format!("table {} has no column '{name}'", self.name)))
    }

    pub fn f64_column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self.column_index(name)?;
        self.rows
            .iter()
            .map(|r| r[k].as_f64().ok_or_else(|| DdError::invalid(format!("column '{name}' is not numeric"))))
            .collect()
    }

    /// Rows whose text column `name` equals `value`.
    pub fn filtered(&self, name: &str, value: &str) -> Result<ResultTable> {
        let k = self.column_index(name)?;
        let mut out = self.clone();
        out.rows.retain(|r| r[k].as_str() == Some(value));
        Ok(out)
    }

    /// Distinct values of a text column in first-seen order.
    pub fn distinct(&self, name: &str) -> Result<Vec<String>> {
        let k = self.column_index(name)?;
        let mut seen: Vec<String> = Vec::new();
        for r in &self.rows {
            let v = r[k].to_string();
            if !seen.contains(&v) {
                seen.push(v);
            }
        }
        Ok(seen)
    }

    fn provenance_lines(&self) -> Vec<String> {
        match &self.provenance {
            Some(p) => vec![
                format!("# scenario: {}", p.scenario),
                format!("# table: {}", self.name),
                format!("# config_hash: {}", p.config_hash),
                format!("# seed: {}", p.seed),
                format!("# version: {}", p.version),
            ],
            None => vec![format!("# table: {}", self.name)],
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for line in self.provenance_lines() {
            out.push_str(&line);
            out.push('\n');
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory CSV write");
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string())).expect("in-memory CSV write");
        }
        let body = w.into_inner().expect("in-memory CSV flush");
        out.push_str(std::str::from_utf8(&body).expect("CSV output is UTF-8"));
        out
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<serde_json::Map<String, serde_json::Value>> = self
            .rows
            .iter()
            .map(|r| {
                self.columns
                    .iter()
                    .zip(r)
                    .map(|(c, v)| (c.clone(), serde_json::to_value(v).expect("value serialises")))
                    .collect()
            })
            .collect();
        let doc = serde_json::json!({
            "meta": {
                "table": self.name,
                "columns": self.columns,
                "provenance": self.provenance,
            },
            "rows": rows,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("JSON serialises");
        s.push('\n');
        s
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }

    /// Write atomically: the file either appears complete or not at all.
    pub fn write(&self, path: &Path, format: OutputFormat) -> Result<()> {
        write_atomic(path, self.render(format).as_bytes())
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let err = |source: std::io::Error| DdError::Output { path: path.display().to_string(), source };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(err)?;
    tmp.write_all(bytes).map_err(err)?;
    tmp.flush().map_err(err)?;
    tmp.persist(path).map_err(|e| err(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ResultTable {
        let mut t = ResultTable::new("demo", &["sequence", "epsilon", "fidelity"]);
        t.push(vec!["kdd".into(), 0.1.into(), 0.99.into()]);
        t.push(vec!["a,b".into(), (-0.25).into(), f64::INFINITY.into()]);
        t.provenance = Some(Provenance::new("fig4", "abc", 7));
        t
    }

    #[test]
    fn csv_layout() {
        let csv = sample().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# scenario: fig4");
        assert!(lines[3].starts_with("# seed: 7"));
        assert_eq!(lines[5], "sequence,epsilon,fidelity");
        assert_eq!(lines[6], "kdd,0.1,0.99");
        assert_eq!(lines[7], "\"a,b\",-0.25,inf");
    }

    #[test]
    fn json_layout() {
        let v: serde_json::Value = serde_json::from_str(&sample().to_json()).unwrap();
        assert_eq!(v["meta"]["provenance"]["seed"], 7);
        assert_eq!(v["rows"][0]["sequence"], "kdd");
        assert_eq!(v["rows"][1]["epsilon"], -0.25);
    }

    #[test]
    fn column_access() {
        let t = sample();
        assert_eq!(t.f64_column("epsilon").unwrap(), vec![0.1, -0.25]);
        assert!(t.f64_column("sequence").is_err());
        assert_eq!(t.filtered("sequence", "kdd").unwrap().rows.len(), 1);
        assert_eq!(t.distinct("sequence").unwrap(), vec!["kdd", "a,b"]);
    }

    #[test]
    fn unwritable_path_is_an_output_error() {
        let err = sample().write(Path::new("/nonexistent-dir/x.csv"), OutputFormat::Csv).unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn format_parsing() {
        assert_eq!("JSON".parse::<OutputFormat>().unwrap(), OutputFormat::Json);
        assert!("xml".parse::<OutputFormat>().is_err());
    }
}
