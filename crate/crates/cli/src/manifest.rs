//! Run manifests: what a command was asked to do, what it read and wrote
//! (with content hashes), and how long each stage took.

use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the manifest's directory when the file lives under it.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub status: String,
    pub error: Option<String>,
    /// Wall-clock seconds per stage. The only field that varies between
    /// identical runs.
    pub timings_s: BTreeMap<String, f64>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::data(format!("io: {}: {e}", path.display())))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// `path` as seen from directory `base`, climbing with `..` where needed.
/// Paths that share no root with `base` come back unchanged.
pub fn relative_to(base: &Path, path: &Path) -> PathBuf {
    if base.as_os_str().is_empty() || base.is_absolute() != path.is_absolute() {
        return path.to_path_buf();
    }
    let (b, p): (Vec<Component<'_>>, Vec<Component<'_>>) =
        (base.components().collect(), path.components().collect());
    let common = b.iter().zip(&p).take_while(|(x, y)| x == y).count();
    if common == 0 || b[common..].iter().any(|c| c == &Component::ParentDir) {
        return path.to_path_buf();
    }
    let mut out = PathBuf::new();
    for _ in common..b.len() {
        out.push("..");
    }
    out.extend(&p[common..]);
    out
}

/// Collects a manifest while a command runs; `finish` hashes everything and
/// writes it next to the command's outputs.
pub struct ManifestBuilder {
    manifest: RunManifest,
    path: PathBuf,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    clock: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, path: impl Into<PathBuf>) -> Self {
        Self {
            manifest: RunManifest {
                tool: env!("CARGO_PKG_NAME").to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                command: command.to_string(),
                seed: None,
                config: serde_json::Value::Null,
                inputs: Vec::new(),
                outputs: Vec::new(),
                status: "running".into(),
                error: None,
                timings_s: BTreeMap::new(),
            },
            path: path.into(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            clock: Instant::now(),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn config<T: Serialize>(&mut self, config: &T) {
        self.manifest.config = serde_json::to_value(config).unwrap_or(serde_json::Value::Null);
    }

    pub fn seed(&mut self, seed: u64) {
        self.manifest.seed = Some(seed);
    }

    pub fn input(&mut self, path: impl Into<PathBuf>) {
        self.inputs.push(path.into());
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    /// Records the time since the previous lap under `stage`.
    pub fn lap(&mut self, stage: &str) {
        let secs = self.clock.elapsed().as_secs_f64();
        *self
            .manifest
            .timings_s
            .entry(stage.to_string())
            .or_default() += secs;
        self.clock = Instant::now();
    }

    pub fn add_timing(&mut self, stage: &str, secs: f64) {
        *self
            .manifest
            .timings_s
            .entry(stage.to_string())
            .or_default() += secs;
    }

    fn record(&self, path: &Path) -> Result<FileRecord, CliError> {
        let base = self.path.parent().unwrap_or(Path::new(""));
        Ok(FileRecord {
            path: relative_to(base, path).to_string_lossy().replace('\\', "/"),
            sha256: sha256_file(path)?,
        })
    }

    /// Writes the manifest with the outcome of the command. Files that can
    /// no longer be read are dropped from a failed run's lists.
    pub fn finish(mut self, outcome: &Result<(), CliError>) -> Result<RunManifest, CliError> {
        self.lap("finish");
        let failed = outcome.is_err();
        let records = |paths: &[PathBuf]| -> Result<Vec<FileRecord>, CliError> {
            let mut out = Vec::new();
            for p in paths {
                match self.record(p) {
                    Ok(r) => out.push(r),
                    Err(_) if failed => {}
                    Err(e) => return Err(e),
                }
            }
            out.sort_by(|a, b| a.path.cmp(&b.path));
            Ok(out)
        };
        let inputs = records(&self.inputs)?;
        let outputs = records(&self.outputs)?;
        self.manifest.inputs = inputs;
        self.manifest.outputs = outputs;
        match outcome {
            Ok(()) => self.manifest.status = "ok".into(),
            Err(e) => {
                self.manifest.status = "error".into();
                self.manifest.error = Some(e.message.clone());
            }
        }
        if let Some(dir) = self.path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&self.path, text)?;
        Ok(self.manifest)
    }
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::data(format!("bad manifest {}: {e}", path.display())))
    }

    /// The manifest with timings cleared, for comparing runs.
    pub fn without_timings(&self) -> Self {
        Self {
            timings_s: BTreeMap::new(),
            ..self.clone()
        }
    }
}
