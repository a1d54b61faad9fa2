//! Artifact writers. Every JSON artifact embeds the resolved model document
//! (overrides and flags applied), which can be passed back as `--model`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::model::ModelDoc;
use crate::CliError;

pub struct Artifacts {
    dir: PathBuf,
    config: Value,
}

impl Artifacts {
    pub fn new(dir: &Path, doc: &ModelDoc) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let config = serde_json::to_value(doc).expect("model document serializes");
        let a = Artifacts {
            dir: dir.to_path_buf(),
            config,
        };
        a.write("resolved_model.json", &pretty(&a.config))?;
        Ok(a)
    }

    fn write(&self, name: &str, body: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    /// Writes `body` with `config` and `command` keys added.
    pub fn json(&self, name: &str, body: Value) -> Result<(), CliError> {
        let mut body = body;
        if let Value::Object(map) = &mut body {
            map.insert("config".into(), self.config.clone());
            map.insert(
                "command".into(),
                Value::from(std::env::args().skip(1).collect::<Vec<_>>()),
            );
        }
        self.write(name, &pretty(&body))
    }

    /// `note` becomes a leading `#` comment line.
    pub fn csv(&self, name: &str, note: &str, table: &Table) -> Result<(), CliError> {
        let mut s = format!("# {note}\n{}\n", table.header.join(","));
        s.push_str(&table.body);
        self.write(name, &s)
    }
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json value serializes") + "\n"
}

/// Fixed columns, floats with 17 significant digits.
pub struct Table {
    header: Vec<String>,
    body: String,
}

impl Table {
    pub fn new(cols: &[&str]) -> Self {
        Table {
            header: cols.iter().map(|c| c.to_string()).collect(),
            body: String::new(),
        }
    }

    pub fn row(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.header.len());
        for (k, v) in values.iter().enumerate() {
            if k > 0 {
                self.body.push(',');
            }
            write!(self.body, "{v:.16e}").unwrap();
        }
        self.body.push('\n');
    }
}
