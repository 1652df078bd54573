use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::error::CliError;

/// CSV with a leading `# config: {json}` comment line.
pub struct Report {
    config: Value,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Report {
    pub fn new(config: &Value, header: &[&str]) -> Self {
        Self {
            config: config.clone(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CliError> {
        let mut out = format!("# config: {}\n", self.config).into_bytes();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        out.extend(w.into_inner().map_err(|e| CliError::io(e.to_string()))?);
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, self.to_bytes()?).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
    }
}

pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}
