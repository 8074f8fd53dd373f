use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// Files a command produces, held in memory until [`Outputs::commit`].
///
/// Commit writes each file through a temporary sibling and a rename. If any
/// step fails, every file written by this commit is removed again.
#[derive(Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_sha256: String,
    seed: u64,
    versions: BTreeMap<&'static str, &'static str>,
    /// Path relative to the manifest directory, to SHA-256 of the contents.
    outputs: BTreeMap<String, String>,
}

impl Outputs {
    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: impl Into<Vec<u8>>) {
        self.files.push((path.into(), bytes.into()));
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    /// Adds `manifest.<command>.json` to `dir`, listing the files added so far.
    pub fn add_manifest(&mut self, dir: &Path, command: &str, cfg: &RunConfig) {
        let outputs = self
            .files
            .iter()
            .map(|(p, b)| {
                (
                    p.strip_prefix(dir).unwrap_or(p).display().to_string(),
                    hex::encode(Sha256::digest(b)),
                )
            })
            .collect();
        let manifest = Manifest {
            command,
            config_sha256: cfg.hash(),
            seed: cfg.seed,
            versions: BTreeMap::from([("ahlm", env!("CARGO_PKG_VERSION"))]),
            outputs,
        };
        let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        json.push('\n');
        self.add(dir.join(format!("manifest.{command}.json")), json);
    }

    pub fn commit(self) -> Result<()> {
        let mut written: Vec<PathBuf> = Vec::new();
        let result = (|| -> Result<()> {
            for (path, bytes) in &self.files {
                if let Some(dir) = path.parent() {
                    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
                }
                let tmp = path.with_extension("partial");
                fs::write(&tmp, bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
                written.push(tmp.clone());
                fs::rename(&tmp, path).with_context(|| format!("cannot move {} into place", path.display()))?;
                written.pop();
                written.push(path.clone());
            }
            Ok(())
        })();
        if result.is_err() {
            for p in &written {
                let _ = fs::remove_file(p);
            }
        }
        result
    }
}
