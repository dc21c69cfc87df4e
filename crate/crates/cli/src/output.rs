//! Tabular output in CSV or JSON, plus content checksums.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::config::Format;
use crate::error::CliError;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(usize),
    Num(f64),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            // shortest round-trip form with an exponent for tiny values;
            // non-finite values fall back to NaN / inf
            Cell::Num(v) => serde_json::Number::from_f64(*v).map_or_else(|| v.to_string(), |n| n.to_string()),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => Value::from(*v),
            Cell::Num(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Text(s) => Value::from(s.as_str()),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: Format) -> Result<Vec<u8>, CliError> {
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&self.header).map_err(CliError::from_csv)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(Cell::csv)).map_err(CliError::from_csv)?;
                }
                w.into_inner().map_err(|e| CliError::Output(e.to_string()))
            }
            Format::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|row| {
                        let obj: Map<String, Value> =
                            self.header.iter().zip(row).map(|(k, v)| (k.to_string(), v.json())).collect();
                        Value::Object(obj)
                    })
                    .collect();
                let mut bytes = serde_json::to_vec_pretty(&rows).map_err(|e| CliError::Output(e.to_string()))?;
                bytes.push(b'\n');
                Ok(bytes)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FileEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_file(directory: &Path, name: &str, bytes: &[u8]) -> Result<FileEntry, CliError> {
    let path = directory.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
    Ok(FileEntry { path: name.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Table {
        let mut t = Table::new(&["x", "direction", "value"]);
        t.push(vec![Cell::Int(1), Cell::Text("X".into()), Cell::Num(-0.125)]);
        t.push(vec![Cell::Int(2), Cell::Text("Y".into()), Cell::Num(1e-300)]);
        t
    }

    #[test]
    fn csv_has_a_header_and_round_trip_numbers() {
        let text = String::from_utf8(table().render(Format::Csv).unwrap()).unwrap();
        assert_eq!(text, "x,direction,value\n1,X,-0.125\n2,Y,1e-300\n");
    }

    #[test]
    fn json_mirrors_the_csv_rows() {
        let v: Value = serde_json::from_slice(&table().render(Format::Json).unwrap()).unwrap();
        assert_eq!(v[0]["direction"], "X");
        assert_eq!(v[1]["value"].as_f64(), Some(1e-300));
    }

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
