//! CSV tables with `#` metadata lines, and the run manifest.

use std::fmt::Display;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Default)]
pub struct Table {
    meta: Vec<(String, String)>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn meta(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.meta.push((key.into(), value.to_string()));
        self
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        out.push_str(&self.header.join(","));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

/// Shortest round-trip representation, so identical values give identical bytes.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct DerivedSeed {
    pub task: String,
    /// `subtask_rng(master, stream, sample)` for Monte Carlo tasks,
    /// `task_rng(master, stream)` otherwise.
    pub stream: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub command_line: Vec<String>,
    pub subcommand: String,
    pub config: String,
    pub master_seed: u64,
    pub derived_seeds: Vec<DerivedSeed>,
    pub version: String,
    pub workers: usize,
    pub wall_clock_seconds: f64,
    pub strict: bool,
    pub outputs: Vec<OutputDigest>,
}

/// Collects the files of one run and writes them with the manifest.
pub struct Run {
    dir: PathBuf,
    pub manifest: Manifest,
}

impl Run {
    pub fn new(dir: &Path, manifest: Manifest) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Run {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn seed(&mut self, task: impl Into<String>, stream: u64) {
        self.manifest.derived_seeds.push(DerivedSeed { task: task.into(), stream });
    }

    pub fn write(&mut self, name: &str, table: &Table) -> Result<PathBuf> {
        let text = table.render();
        let path = self.dir.join(name);
        std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.outputs.push(OutputDigest {
            file: name.into(),
            sha256: sha256_hex(text.as_bytes()),
        });
        Ok(path)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.outputs.push(OutputDigest {
            file: name.into(),
            sha256: sha256_hex(text.as_bytes()),
        });
        Ok(path)
    }

    pub fn finish(mut self, seconds: f64) -> Result<PathBuf> {
        self.manifest.wall_clock_seconds = seconds;
        let path = self.dir.join(format!("{}.manifest.json", self.manifest.subcommand.replace(' ', "-")));
        std::fs::write(&path, serde_json::to_string_pretty(&self.manifest)?)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_layout() {
        let mut t = Table::new(&["a", "b"]);
        t.meta("seed", 3);
        t.row(vec![num(0.1), num(2.0)]);
        assert_eq!(t.render(), "# seed: 3\na,b\n0.1,2\n");
    }

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
