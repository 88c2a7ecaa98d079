//! Checkpoint registry: stage id -> (artifact path, content hash, lineage).

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::backend::EpochStats;
use crate::workspace::write_atomic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Relative to the workspace root.
    pub path: PathBuf,
    pub content_hash: String,
    /// Base id; absent for imported external checkpoints.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<String>,
    /// Content hash of the base artifact this one was trained from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_hash: Option<String>,
    pub backend: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epochs: Vec<EpochStats>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub artifacts: BTreeMap<String, ArtifactRecord>,
}

impl Registry {
    pub fn load(path: &Path) -> std::io::Result<Self> {
        if !path.exists() {
            return Ok(Registry::default());
        }
        serde_json::from_str(&fs::read_to_string(path)?).map_err(std::io::Error::from)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_vec_pretty(self).map_err(std::io::Error::from)?;
        write_atomic(path, &text)
    }

    pub fn get(&self, id: &str) -> Option<&ArtifactRecord> {
        self.artifacts.get(id)
    }
}

pub fn hash_file(path: &Path) -> std::io::Result<String> {
    let mut hasher = Sha256::new();
    let mut f = fs::File::open(path)?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex(&hasher.finalize()))
}

/// Hash over relative paths and contents of all files, in sorted order.
pub fn hash_dir(dir: &Path) -> std::io::Result<String> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files.sort();
    let mut hasher = Sha256::new();
    for rel in files {
        hasher.update(rel.to_string_lossy().as_bytes());
        hasher.update([0u8]);
        hasher.update(fs::read(dir.join(&rel))?);
        hasher.update([0u8]);
    }
    Ok(hex(&hasher.finalize()))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if entry.file_type()?.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

pub(crate) fn hash_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dir_hash_tracks_content_and_names() {
        let a = tempfile::tempdir().unwrap();
        fs::write(a.path().join("x"), "1").unwrap();
        fs::create_dir(a.path().join("sub")).unwrap();
        fs::write(a.path().join("sub/y"), "2").unwrap();
        let h1 = hash_dir(a.path()).unwrap();
        assert_eq!(h1, hash_dir(a.path()).unwrap());
        fs::write(a.path().join("sub/y"), "3").unwrap();
        assert_ne!(h1, hash_dir(a.path()).unwrap());
    }

    #[test]
    fn registry_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("registry.json");
        let mut r = Registry::default();
        r.artifacts.insert(
            "s".into(),
            ArtifactRecord {
                path: "checkpoints/s".into(),
                content_hash: "abc".into(),
                base: Some("b".into()),
                base_hash: Some("def".into()),
                config_hash: None,
                dataset_hash: None,
                backend: "null".into(),
                epochs: vec![],
            },
        );
        r.save(&p).unwrap();
        assert_eq!(Registry::load(&p).unwrap(), r);
        assert_eq!(Registry::load(&dir.path().join("none.json")).unwrap(), Registry::default());
    }
}
