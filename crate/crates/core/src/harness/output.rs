use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

/// Shortest text that reads back to the same double (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV file whose first line is `# config_hash: <hex>`, followed by optional
/// `# key: value` lines, a header and numeric rows.
pub struct CsvTable<'a> {
    pub header: &'a [&'a str],
    pub comments: Vec<(String, String)>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable<'_> {
    pub fn write(&self, path: &Path, config_hash: &str) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "# config_hash: {config_hash}").map_err(io)?;
        for (k, v) in &self.comments {
            writeln!(out, "# {k}: {v}").map_err(io)?;
        }
        let mut writer = csv::Writer::from_writer(out);
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        writer.write_record(self.header).map_err(csv_err)?;
        for row in &self.rows {
            writer.write_record(row).map_err(csv_err)?;
        }
        writer.flush().map_err(io)?;
        Ok(())
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("cannot serialise {}: {e}", path.display())))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Metadata written next to every set of outputs.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub version: String,
    pub wall_time_seconds: f64,
    pub threads: usize,
    pub outputs: Vec<PathBuf>,
    pub dataset: serde_json::Value,
    pub extra: serde_json::Value,
}
