//! Record of every file the pipeline writes, with content hashes so later
//! commands can verify what they read.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub sha256: String,
    pub command: String,
    pub config_hash: String,
    /// Hashes of the manifest artifacts this one was computed from.
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifacts: BTreeMap<String, Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Output directory plus its manifest. Paths are relative to the directory
/// and always use `/`.
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    manifest: Manifest,
    config_hash: String,
}

impl Store {
    pub fn open(root: &Path, config_hash: &str) -> anyhow::Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        let path = root.join(MANIFEST_FILE);
        let manifest = if path.exists() {
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            Manifest::default()
        };
        Ok(Store { root: root.to_path_buf(), manifest, config_hash: config_hash.to_string() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn save(&self) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        let path = self.root.join(MANIFEST_FILE);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    /// Writes `bytes` to `rel` and lists it, replacing any earlier entry.
    pub fn write(&mut self, rel: &str, bytes: &[u8], command: &str, inputs: &[&str]) -> anyhow::Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        let inputs = inputs
            .iter()
            .map(|i| {
                let a = self.manifest.artifacts.get(*i).with_context(|| format!("input {i} is not in the manifest"))?;
                Ok((i.to_string(), a.sha256.clone()))
            })
            .collect::<anyhow::Result<_>>()?;
        self.manifest.artifacts.insert(
            rel.to_string(),
            Artifact {
                sha256: sha256_hex(bytes),
                command: command.to_string(),
                config_hash: self.config_hash.clone(),
                inputs,
            },
        );
        Ok(())
    }

    /// Reads a listed artifact, failing if it is unlisted or its content no
    /// longer matches the recorded hash.
    pub fn read(&self, rel: &str) -> anyhow::Result<String> {
        let Some(a) = self.manifest.artifacts.get(rel) else {
            bail!("{rel} is not in the manifest; run the command that produces it first");
        };
        let path = self.root.join(rel);
        let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        let got = sha256_hex(&bytes);
        if got != a.sha256 {
            bail!("hash mismatch for {rel}: manifest has {}, file has {got}", a.sha256);
        }
        String::from_utf8(bytes).with_context(|| format!("{rel} is not UTF-8"))
    }

    /// True when every path is listed under the current config, its
    /// content verifies, and its recorded inputs are unchanged.
    pub fn fresh(&self, rels: &[String]) -> bool {
        rels.iter().all(|rel| {
            let Some(a) = self.manifest.artifacts.get(rel) else { return false };
            a.config_hash == self.config_hash
                && fs::read(self.root.join(rel)).is_ok_and(|b| sha256_hex(&b) == a.sha256)
                && a.inputs.iter().all(|(i, h)| self.manifest.artifacts.get(i).is_some_and(|x| &x.sha256 == h))
        })
    }
}
