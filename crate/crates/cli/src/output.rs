//! Report emission: every artifact carries the input hash, seed and versions.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub command: String,
    /// SHA-256 of the canonical JSON input.
    pub spec_hash: String,
    pub seed: u64,
    pub exact: bool,
    pub versions: BTreeMap<&'static str, &'static str>,
}

impl Meta {
    pub fn new(command: &str, canonical_input: &str, seed: u64, exact: bool) -> Self {
        Self {
            command: command.to_string(),
            spec_hash: hex::encode(Sha256::digest(canonical_input.as_bytes())),
            seed,
            exact,
            versions: BTreeMap::from([("femq", femq::VERSION), ("femq-cli", env!("CARGO_PKG_VERSION"))]),
        }
    }
}

/// Plot-ready table with named columns.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

/// Result of one subcommand: the full report, plus a table for CSV output.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub result: Value,
    pub table: Option<Table>,
    /// Scalar summaries printed as `# key=value` lines above a CSV table.
    pub notes: Vec<(&'static str, String)>,
}

impl Artifact {
    pub fn report(result: impl Serialize) -> Self {
        Self { result: to_value(result), table: None, notes: Vec::new() }
    }

    pub fn table(result: impl Serialize, table: Table) -> Self {
        Self { result: to_value(result), table: Some(table), notes: Vec::new() }
    }

    pub fn with_note(mut self, key: &'static str, value: impl ToString) -> Self {
        self.notes.push((key, value.to_string()));
        self
    }
}

fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).expect("reports serialize to JSON")
}

/// Flattens nested objects and arrays into `a.b[2]`-style keys.
fn flatten(prefix: &str, value: &Value, out: &mut Vec<(String, String)>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), v, out);
            }
        }
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Null => out.push((prefix.to_string(), String::new())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

pub fn render(meta: &Meta, artifact: &Artifact, format: Format) -> Result<String, CliError> {
    match format {
        Format::Json => {
            let doc = serde_json::json!({ "meta": meta, "result": artifact.result });
            Ok(serde_json::to_string_pretty(&doc).expect("reports serialize to JSON") + "\n")
        }
        Format::Csv => {
            let mut header = Vec::new();
            flatten("", &to_value(meta), &mut header);
            let mut text: String = header.iter().map(|(k, v)| format!("# {k}={v}\n")).collect();
            for (k, v) in &artifact.notes {
                text.push_str(&format!("# {k}={v}\n"));
            }
            let mut writer = csv::Writer::from_writer(Vec::new());
            match &artifact.table {
                Some(table) => {
                    writer.write_record(&table.columns)?;
                    for row in &table.rows {
                        writer.write_record(row)?;
                    }
                }
                None => {
                    let mut pairs = Vec::new();
                    flatten("", &artifact.result, &mut pairs);
                    writer.write_record(["key", "value"])?;
                    for (k, v) in pairs {
                        writer.write_record([k, v])?;
                    }
                }
            }
            let body = writer.into_inner().map_err(|e| CliError::Write(e.into_error()))?;
            text.push_str(&String::from_utf8(body).expect("CSV output is UTF-8"));
            Ok(text)
        }
    }
}

/// Writes to `<out>/<command>.<ext>` when an output directory is given, else to stdout.
pub fn emit(text: &str, command: &str, format: Format, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(format!("{command}.{}", format.extension()));
            std::fs::write(&path, text)?;
            eprintln!("wrote {}", path.display());
        }
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}
