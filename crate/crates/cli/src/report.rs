//! Report files: a JSON document and an optional CSV table, both stamped
//! with the tool version and the configuration hash.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::config_hash;
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct Report {
    pub command: &'static str,
    pub config: Value,
    pub result: Value,
    pub table: Option<Table>,
}

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

/// Shortest round-trip formatting, so tables are byte-stable.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else if v > 0.0 {
        "inf".into()
    } else if v < 0.0 {
        "-inf".into()
    } else {
        "nan".into()
    }
}

pub fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report data serialises")
}

impl Report {
    pub fn hash(&self) -> String {
        config_hash(&json!({ "command": self.command, "config": self.config }))
    }

    pub fn document(&self) -> Value {
        json!({
            "tool": "gmt-aniso",
            "version": VERSION,
            "command": self.command,
            "config_hash": self.hash(),
            "config": self.config,
            "result": self.result,
        })
    }

    /// Writes `<command>.json` (and `<command>.csv`) under `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        let json_path = dir.join(format!("{}.json", self.command));
        let mut text = serde_json::to_string_pretty(&self.document()).expect("report serialises");
        text.push('\n');
        fs::write(&json_path, text).map_err(|e| io_error(&json_path, e))?;
        if let Some(table) = &self.table {
            let csv_path = dir.join(format!("{}.csv", self.command));
            let mut file = fs::File::create(&csv_path).map_err(|e| io_error(&csv_path, e))?;
            writeln!(
                file,
                "# gmt-aniso {VERSION} {} config_hash={}",
                self.command,
                self.hash()
            )
            .map_err(|e| io_error(&csv_path, e))?;
            let mut w = csv::Writer::from_writer(file);
            let res: csv::Result<()> = (|| {
                w.write_record(&table.header)?;
                for row in &table.rows {
                    w.write_record(row)?;
                }
                w.flush()?;
                Ok(())
            })();
            res.map_err(|e| CliError::Analysis {
                kind: "io".into(),
                message: format!("{}: {e}", csv_path.display()),
            })?;
        }
        Ok(())
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Analysis {
        kind: "io".into(),
        message: format!("{}: {e}", path.display()),
    }
}
