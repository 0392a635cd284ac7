//! Deterministic CSV and JSON emission.
//!
//! CSV files start with `#` lines carrying the command and the resolved
//! configuration, then one header row. Floats use 17 significant digits.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;

/// `{:.16e}`: 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    // print negative zero as zero
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.16e}")
}

pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(command: &str, config: &RunConfig, meta: &[(&str, String)], header: &[&str]) -> Self {
        let mut text = format!("# ahawk {command}\n");
        for (k, v) in config.entries() {
            let _ = writeln!(text, "# {k} = {v}");
        }
        for (k, v) in meta {
            let _ = writeln!(text, "# {k} = {v}");
        }
        text.push_str(&header.join(","));
        text.push('\n');
        Self {
            text,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.columns);
        let cells: Vec<String> = values.iter().map(|v| fmt_f64(*v)).collect();
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, &self.text)
    }
}

/// JSON document with the resolved configuration echoed under `config`.
#[derive(Serialize)]
pub struct Report<'a, T: Serialize> {
    pub command: &'a str,
    pub config: &'a RunConfig,
    #[serde(flatten)]
    pub body: T,
}

pub fn write_json<T: Serialize>(path: &Path, command: &str, config: &RunConfig, body: T) -> std::io::Result<()> {
    let doc = Report { command, config, body };
    let mut text = serde_json::to_string_pretty(&doc).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(path, text)
}

/// Output directory, created if missing.
pub fn output_dir(config: &RunConfig) -> std::io::Result<PathBuf> {
    let dir = PathBuf::from(&config.out_dir);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// `8` -> `8`, `0.5` -> `0.5`: the shortest exact form, used in file names.
pub fn tag(v: f64) -> String {
    v.to_string()
}
