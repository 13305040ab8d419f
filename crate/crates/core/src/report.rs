//! Artifact output: every command writes its files into one directory and
//! finishes with a `manifest.json` describing how they were produced.
//!
//! Manifests carry no timestamps or host details, so rerunning a manifest's
//! configuration on the same build reproduces every byte.

use crate::data::kv::KeyValues;
use crate::error::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// Hash of the canonical configuration text.
    pub config_hash: String,
    pub config: BTreeMap<String, String>,
    /// Seed per named stream family used by the command.
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub artifacts: Vec<FileDigest>,
    /// Manifest found next to the input data, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upstream: Option<serde_json::Value>,
    pub warnings: Vec<String>,
}

/// Output directory that records what was written into it.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    artifacts: Vec<FileDigest>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, text)?;
        self.artifacts.push(FileDigest {
            path: name.to_string(),
            sha256: sha256_hex(text.as_bytes()),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    /// Register a file some other writer already placed under the root.
    pub fn record(&mut self, name: &str) -> Result<()> {
        let bytes = fs::read(self.root.join(name))?;
        self.artifacts.push(FileDigest {
            path: name.to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn finish(mut self, mut manifest: Manifest) -> Result<Manifest> {
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        manifest.artifacts = std::mem::take(&mut self.artifacts);
        self.write_json("manifest.json", &manifest)?;
        Ok(manifest)
    }
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&fs::read(path)?),
    })
}

pub fn config_hash(kv: &KeyValues) -> String {
    sha256_hex(kv.to_text().as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_lists_artifacts_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(&dir.path().join("run")).unwrap();
        out.write_text("b.csv", "x\n1\n").unwrap();
        out.write_json("a.json", &vec![1, 2]).unwrap();
        let m = out
            .finish(Manifest {
                tool: "apce",
                version: "0",
                command: "test".into(),
                config_hash: String::new(),
                config: BTreeMap::new(),
                seeds: BTreeMap::new(),
                inputs: vec![],
                artifacts: vec![],
                upstream: None,
                warnings: vec![],
            })
            .unwrap();
        let names: Vec<&str> = m.artifacts.iter().map(|a| a.path.as_str()).collect();
        assert_eq!(names, ["a.json", "b.csv"]);
        assert!(dir.path().join("run/manifest.json").exists());
    }
}
