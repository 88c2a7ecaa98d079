//! Workspace layout and configuration.
//!
//! ```text
//! <root>/workspace.json      optional: corpus registry, credential env names
//! <root>/registry.json       checkpoint registry (stage id -> artifact)
//! <root>/checkpoints/<id>/   registered artifacts
//! <root>/runs/<id>/          in-progress training state
//! <root>/eval/               human-evaluation event log
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum WorkspaceError {
    #[error("path `{0}` escapes the workspace")]
    OutsideWorkspace(PathBuf),
    #[error("workspace is locked by another training run ({0})")]
    Locked(PathBuf),
    #[error("credential `{name}` expects environment variable `{var}`, which is not set")]
    MissingCredential { name: String, var: String },
    #[error("unknown credential `{0}`")]
    UnknownCredential(String),
    #[error("invalid workspace.json: {0}")]
    Config(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl WorkspaceError {
    pub fn class(&self) -> &'static str {
        match self {
            WorkspaceError::OutsideWorkspace(_) => "OutsideWorkspace",
            WorkspaceError::Locked(_) => "WorkspaceLocked",
            WorkspaceError::MissingCredential { .. } => "MissingCredential",
            WorkspaceError::UnknownCredential(_) => "UnknownCredential",
            WorkspaceError::Config(_) => "ConfigError",
            WorkspaceError::Io(_) => "IoError",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct WorkspaceFile {
    #[serde(default)]
    corpora: BTreeMap<String, PathBuf>,
    #[serde(default)]
    registry: Option<PathBuf>,
    /// credential name -> environment variable holding the secret
    #[serde(default)]
    credentials: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkspaceConfig {
    root: PathBuf,
    corpora: BTreeMap<String, PathBuf>,
    registry: PathBuf,
    credentials: BTreeMap<String, String>,
}

/// Lexically checks that `rel` stays inside the workspace.
fn contained(rel: &Path) -> bool {
    let mut depth: isize = 0;
    for c in rel.components() {
        match c {
            Component::Normal(_) => depth += 1,
            Component::CurDir => {}
            Component::ParentDir => {
                depth -= 1;
                if depth < 0 {
                    return false;
                }
            }
            Component::RootDir | Component::Prefix(_) => return false,
        }
    }
    true
}

impl WorkspaceConfig {
    /// Opens `root`, reading `workspace.json` when present.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, WorkspaceError> {
        let root = root.into();
        let file_path = root.join("workspace.json");
        let file: WorkspaceFile = if file_path.exists() {
            serde_json::from_str(&fs::read_to_string(&file_path)?)?
        } else {
            WorkspaceFile::default()
        };
        let ws = WorkspaceConfig {
            corpora: file.corpora,
            registry: file.registry.unwrap_or_else(|| PathBuf::from("registry.json")),
            credentials: file.credentials,
            root,
        };
        for p in ws.corpora.values().chain(std::iter::once(&ws.registry)) {
            ws.check(p)?;
        }
        Ok(ws)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn check(&self, rel: &Path) -> Result<(), WorkspaceError> {
        let inside = if rel.is_absolute() {
            rel.strip_prefix(&self.root).map(contained).unwrap_or(false)
        } else {
            contained(rel)
        };
        if inside {
            Ok(())
        } else {
            Err(WorkspaceError::OutsideWorkspace(rel.to_path_buf()))
        }
    }

    /// Joins a workspace-relative path, rejecting escapes.
    pub fn resolve(&self, rel: impl AsRef<Path>) -> Result<PathBuf, WorkspaceError> {
        let rel = rel.as_ref();
        self.check(rel)?;
        Ok(if rel.is_absolute() { rel.to_path_buf() } else { self.root.join(rel) })
    }

    pub fn registry_path(&self) -> PathBuf {
        self.root.join(&self.registry)
    }

    pub fn checkpoint_dir(&self, id: &str) -> PathBuf {
        self.root.join("checkpoints").join(sanitize(id))
    }

    pub fn run_dir(&self, id: &str) -> PathBuf {
        self.root.join("runs").join(sanitize(id))
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }

    /// Registered corpus path, or `name` itself taken as a relative path.
    pub fn corpus_path(&self, name: &str) -> Result<PathBuf, WorkspaceError> {
        match self.corpora.get(name) {
            Some(p) => self.resolve(p),
            None => self.resolve(name),
        }
    }

    pub fn credential(&self, name: &str) -> Result<String, WorkspaceError> {
        let var = self.credentials.get(name).ok_or_else(|| WorkspaceError::UnknownCredential(name.into()))?;
        std::env::var(var).map_err(|_| WorkspaceError::MissingCredential { name: name.into(), var: var.clone() })
    }

    pub fn credential_var(&self, name: &str) -> Option<&str> {
        self.credentials.get(name).map(String::as_str)
    }
}

/// Stage ids become directory names.
pub fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

/// Exclusive lock held for the duration of a training run.
#[derive(Debug)]
pub struct WorkspaceLock {
    path: PathBuf,
}

impl WorkspaceLock {
    pub fn acquire(workspace: &WorkspaceConfig) -> Result<Self, WorkspaceError> {
        fs::create_dir_all(workspace.root())?;
        let path = workspace.root().join(".radsum-train.lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(WorkspaceLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(WorkspaceError::Locked(path)),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for WorkspaceLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Writes `contents` to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}
