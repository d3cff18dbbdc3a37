// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Failure;

pub const MANIFEST_SCHEMA: &str = "sctkit.manifest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

/// Record of one command run: what went in, what came out, and how long each stage took.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub version: String,
    pub command: String,
    pub args: Vec<String>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub stages: Vec<Stage>,
}

pub fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct Run {
    manifest: RunManifest,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Run {
    pub fn new(command: &str) -> Self {
        Run {
            manifest: RunManifest {
                schema: MANIFEST_SCHEMA.into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                args: std::env::args().skip(1).collect(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                config: serde_json::Value::Null,
                seeds: BTreeMap::new(),
                stages: Vec::new(),
            },
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: impl Into<PathBuf>) {
        self.inputs.push(path.into());
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.manifest.seeds.insert(name.into(), value);
    }

    pub fn config<T: Serialize>(&mut self, value: &T) {
        self.manifest.config = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
    }

    pub fn record(&mut self, name: &str, seconds: f64) {
        self.manifest.stages.push(Stage {
            name: name.into(),
            seconds,
        });
    }

    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.record(name, t.elapsed().as_secs_f64());
        out
    }

    /// Hashes every recorded file and writes the manifest to `path`.
    pub fn finish(mut self, path: &Path) -> Result<RunManifest, Failure> {
        let hash = |paths: &[PathBuf]| -> Result<Vec<FileHash>, Failure> {
            paths
                .iter()
                .map(|p| {
                    Ok(FileHash {
                        path: p.display().to_string(),
                        sha256: sha256_file(p)?,
                    })
                })
                .collect()
        };
        self.manifest.inputs = hash(&self.inputs)?;
        self.manifest.outputs = hash(&self.outputs)?;
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| Failure::io(path, e))?;
        Ok(self.manifest)
    }
}

/// `out.json` gets `out.json.manifest.json`; a directory gets `dir/manifest.json`.
pub fn default_path(output: &Path) -> PathBuf {
    if output.is_dir() {
        output.join("manifest.json")
    } else {
        let mut s = output.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }
}
