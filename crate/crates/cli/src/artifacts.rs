//! Artifact plumbing: output directories and byte-stable JSON/CSV writers.
//!
//! Every JSON report is wrapped in [`Stamped`], which prefixes the schema
//! version, the configuration content hash, and the seed, so any artifact can
//! be traced to the exact settings that produced it. Floats are serialized
//! with shortest-roundtrip formatting in both JSON and CSV, which makes
//! re-runs byte-identical.

use anyhow::{Context as _, Result};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

/// An output directory, created (with parents) on construction.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<OutDir> {
        fs::create_dir_all(root)
            .with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(OutDir {
            root: root.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Serialize `value` as pretty JSON with a trailing newline.
    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value)
            .with_context(|| format!("serializing {name}"))?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
        Ok(path)
    }

    /// Write pre-rendered text (CSV, JSONL) verbatim.
    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
        Ok(path)
    }
}

/// Provenance header shared by all JSON reports.
#[derive(Serialize)]
pub struct Stamped<T: Serialize> {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    #[serde(flatten)]
    pub body: T,
}

impl<T: Serialize> Stamped<T> {
    pub fn new(config_hash: &str, seed: u64, body: T) -> Stamped<T> {
        Stamped {
            schema_version: harkit_core::config::CONFIG_SCHEMA_VERSION,
            config_hash: config_hash.to_string(),
            seed,
            body,
        }
    }
}

/// Incremental CSV builder; floats go through `Display`, so equal values
/// always render identically.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &str) -> Csv {
        let mut text = String::from(header);
        text.push('\n');
        Csv { text }
    }

    /// Append one row of already-formatted cells.
    pub fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}

/// Format a float cell with shortest-roundtrip precision.
pub fn cell(v: f64) -> String {
    format!("{v}")
}
