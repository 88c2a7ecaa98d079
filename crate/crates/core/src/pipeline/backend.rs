use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::config::{Task, TrainingHyperparams};
use super::dataset::SplitExamples;
use super::registry::hash_dir;
use crate::corpus::CorpusDescriptor;
use crate::language::LanguageSet;
use crate::workspace::write_atomic;

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("{0}")]
    Failed(String),
    #[error("artifact at {0} is missing or unreadable")]
    BadArtifact(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Everything a backend needs to fine-tune one stage.
#[derive(Debug, Clone)]
pub struct TrainingJob {
    pub stage_id: String,
    pub base: String,
    pub task: Task,
    pub hyperparams: TrainingHyperparams,
    pub dataset: CorpusDescriptor,
    pub dataset_path: PathBuf,
    pub input_field: String,
    pub target_field: String,
    pub examples: SplitExamples,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    #[serde(default)]
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArtifactKind {
    Null,
    Toy,
    External,
}

/// `checkpoint.json` at the root of every artifact directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactManifest {
    pub kind: ArtifactKind,
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_new_tokens: Option<usize>,
    /// Languages the artifact was last fine-tuned on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<LanguageSet>,
    /// Program (argv prefix) serving generation for external artifacts.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub command: Vec<String>,
}

pub const MANIFEST_FILE: &str = "checkpoint.json";

pub fn write_manifest(dir: &Path, manifest: &ArtifactManifest) -> std::io::Result<()> {
    let text = serde_json::to_vec_pretty(manifest).map_err(std::io::Error::from)?;
    write_atomic(&dir.join(MANIFEST_FILE), &text)
}

pub fn read_manifest(dir: &Path) -> Result<ArtifactManifest, BackendError> {
    let text = std::fs::read_to_string(dir.join(MANIFEST_FILE)).map_err(|_| BackendError::BadArtifact(dir.into()))?;
    serde_json::from_str(&text).map_err(|_| BackendError::BadArtifact(dir.into()))
}

/// An in-progress fine-tuning run, advanced one epoch at a time.
pub trait TrainingRun {
    fn train_epoch(&mut self, epoch: usize) -> Result<EpochStats, BackendError>;
    /// Persists everything needed to continue after the last epoch.
    fn save_state(&self, state_dir: &Path) -> Result<(), BackendError>;
    /// Writes the final artifact, including its manifest.
    fn export(&self, artifact_dir: &Path) -> Result<(), BackendError>;
}

pub trait TrainerBackend: Send + Sync {
    fn name(&self) -> &'static str;
    /// Materialises an external checkpoint as an artifact directory.
    fn import_base(&self, checkpoint: &str, artifact_dir: &Path) -> Result<(), BackendError>;
    /// Begins a run initialised from the artifact in `base_dir`. The run
    /// may keep working files in `state_dir`.
    fn start<'a>(
        &'a self,
        job: &TrainingJob,
        base_dir: &Path,
        state_dir: &Path,
    ) -> Result<Box<dyn TrainingRun + 'a>, BackendError>;
    /// Continues a run from what `save_state` last wrote to `state_dir`.
    fn resume<'a>(&'a self, job: &TrainingJob, state_dir: &Path) -> Result<Box<dyn TrainingRun + 'a>, BackendError>;
}

/// What the null backend was asked to do.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Invocation {
    Import {
        checkpoint: String,
    },
    Train {
        stage_id: String,
        base: String,
        task: Task,
        hyperparams: TrainingHyperparams,
        dataset: CorpusDescriptor,
        input_field: String,
        target_field: String,
        train: usize,
        validation: usize,
        test: usize,
    },
}

impl Invocation {
    fn for_job(job: &TrainingJob) -> Self {
        Invocation::Train {
            stage_id: job.stage_id.clone(),
            base: job.base.clone(),
            task: job.task,
            hyperparams: job.hyperparams.clone(),
            dataset: job.dataset.clone(),
            input_field: job.input_field.clone(),
            target_field: job.target_field.clone(),
            train: job.examples.train.len(),
            validation: job.examples.validation.len(),
            test: job.examples.test.len(),
        }
    }
}

/// Records invocations; trains nothing. Artifacts contain only the
/// manifest and the recorded job, so their hashes are deterministic.
#[derive(Debug, Clone, Default)]
pub struct NullBackend {
    log: Arc<Mutex<Vec<Invocation>>>,
}

impl NullBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn invocations(&self) -> Vec<Invocation> {
        self.log.lock().expect("invocation log poisoned").clone()
    }

    fn record(&self, inv: Invocation) {
        self.log.lock().expect("invocation log poisoned").push(inv);
    }
}

struct NullRun {
    job: Invocation,
    language: LanguageSet,
    /// Content hash of the base artifact, so lineage shows in the output.
    base_hash: String,
    stage_id: String,
    max_new_tokens: usize,
    task: Task,
}

impl TrainingRun for NullRun {
    fn train_epoch(&mut self, epoch: usize) -> Result<EpochStats, BackendError> {
        Ok(EpochStats { epoch, train_loss: 0.0, validation_loss: None })
    }

    fn save_state(&self, state_dir: &Path) -> Result<(), BackendError> {
        std::fs::create_dir_all(state_dir)?;
        Ok(())
    }

    fn export(&self, artifact_dir: &Path) -> Result<(), BackendError> {
        std::fs::create_dir_all(artifact_dir)?;
        let record = serde_json::json!({ "job": self.job, "base_hash": self.base_hash });
        let job = serde_json::to_vec_pretty(&record).map_err(std::io::Error::from)?;
        write_atomic(&artifact_dir.join("job.json"), &job)?;
        write_manifest(
            artifact_dir,
            &ArtifactManifest {
                kind: ArtifactKind::Null,
                id: self.stage_id.clone(),
                task: Some(self.task),
                max_new_tokens: Some(self.max_new_tokens),
                language: Some(self.language.clone()),
                command: Vec::new(),
            },
        )?;
        Ok(())
    }
}

impl TrainerBackend for NullBackend {
    fn name(&self) -> &'static str {
        "null"
    }

    fn import_base(&self, checkpoint: &str, artifact_dir: &Path) -> Result<(), BackendError> {
        self.record(Invocation::Import { checkpoint: checkpoint.into() });
        std::fs::create_dir_all(artifact_dir)?;
        write_manifest(
            artifact_dir,
            &ArtifactManifest { kind: ArtifactKind::Null, id: checkpoint.into(), task: None, max_new_tokens: None, command: Vec::new(), language: None },
        )?;
        Ok(())
    }

    fn start<'a>(
        &'a self,
        job: &TrainingJob,
        base_dir: &Path,
        state_dir: &Path,
    ) -> Result<Box<dyn TrainingRun + 'a>, BackendError> {
        let inv = Invocation::for_job(job);
        self.record(inv.clone());
        let base_hash = hash_dir(base_dir)?;
        std::fs::create_dir_all(state_dir)?;
        write_atomic(&state_dir.join("base_hash"), base_hash.as_bytes())?;
        Ok(Box::new(NullRun {
            job: inv,
            language: job.dataset.language.clone(),
            base_hash,
            stage_id: job.stage_id.clone(),
            max_new_tokens: job.hyperparams.max_new_tokens,
            task: job.task,
        }))
    }

    fn resume<'a>(&'a self, job: &TrainingJob, state_dir: &Path) -> Result<Box<dyn TrainingRun + 'a>, BackendError> {
        let base_hash = std::fs::read_to_string(state_dir.join("base_hash"))
            .map_err(|_| BackendError::BadArtifact(state_dir.into()))?;
        Ok(Box::new(NullRun {
            job: Invocation::for_job(job),
            language: job.dataset.language.clone(),
            base_hash,
            stage_id: job.stage_id.clone(),
            max_new_tokens: job.hyperparams.max_new_tokens,
            task: job.task,
        }))
    }
}
