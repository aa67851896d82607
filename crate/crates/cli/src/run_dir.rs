//! Run directory: artifacts plus a manifest recording the config hash and, per
//! stage, the cache key and the SHA-256 of every file the stage wrote.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use smspace::seed::sha256_hex;

use crate::config::Stage;
use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Hash over the stage's config section and its input files.
    pub key: String,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub config_hash: String,
    pub stages: BTreeMap<Stage, StageRecord>,
}

pub struct RunDir {
    root: PathBuf,
    manifest: Manifest,
}

impl RunDir {
    pub fn open(root: &Path, config_hash: String) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        let path = root.join(MANIFEST);
        let mut manifest = match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).unwrap_or_else(|_| Manifest::empty()),
            Err(_) => Manifest::empty(),
        };
        manifest.config_hash = config_hash;
        Ok(RunDir {
            root: root.to_path_buf(),
            manifest,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Contents of an upstream artifact; a missing file is a usage error.
    pub fn read(&self, name: &str) -> CliResult<Vec<u8>> {
        let path = self.path(name);
        fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::Usage(format!(
                "missing artifact {} (run the upstream stage first)",
                path.display()
            )),
            _ => CliError::io(&path, e),
        })
    }

    /// Writes via a temporary file and rename, returning the content hash.
    pub fn write(&self, name: &str, bytes: &[u8]) -> CliResult<String> {
        let path = self.path(name);
        let tmp = self.path(&format!(".{name}.tmp"));
        fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| CliError::io(&path, e))?;
        Ok(sha256_hex(bytes))
    }

    /// Hashes of the named files as they are on disk now.
    pub fn hashes(&self, names: &[&str]) -> CliResult<BTreeMap<String, String>> {
        names
            .iter()
            .map(|n| Ok((n.to_string(), sha256_hex(&self.read(n)?))))
            .collect()
    }

    /// True when `stage` last ran with `key` and its outputs are untouched.
    pub fn is_cached(&self, stage: Stage, key: &str) -> bool {
        let Some(rec) = self.manifest.stages.get(&stage) else {
            return false;
        };
        rec.key == key
            && rec
                .outputs
                .iter()
                .all(|(name, hash)| fs::read(self.path(name)).is_ok_and(|b| &sha256_hex(&b) == hash))
    }

    pub fn record(&mut self, stage: Stage, key: String, outputs: BTreeMap<String, String>) -> CliResult<()> {
        self.manifest.stages.insert(stage, StageRecord { key, outputs });
        self.save()
    }

    pub fn save(&self) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(&self.manifest).expect("manifest serializes");
        bytes.push(b'\n');
        self.write(MANIFEST, &bytes).map(|_| ())
    }
}

impl Manifest {
    fn empty() -> Self {
        Manifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: String::new(),
            stages: BTreeMap::new(),
        }
    }
}

/// Cache key over a stage name, its config section, and its input hashes.
pub fn stage_key<T: Serialize>(stage: Stage, section: &T, inputs: &BTreeMap<String, String>) -> String {
    let doc = serde_json::json!({
        "stage": stage.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "config": section,
        "inputs": inputs,
    });
    sha256_hex(&serde_json::to_vec(&doc).expect("key document serializes"))
}
