//! Declarative staged fine-tuning.
//!
//! A [`PipelineConfig`] lists stages; each stage fine-tunes the artifact of
//! its `base` (another stage or an external checkpoint) on one dataset. The
//! gradient updates themselves are delegated to a [`TrainerBackend`]:
//!
//! * [`NullBackend`] records invocations and trains nothing,
//! * [`ToyBackend`] trains the tiny seq2seq in [`crate::model`],
//! * [`ExternalBackend`] drives an external fine-tuning program.

mod backend;
mod config;
mod dataset;
mod external;
mod registry;
mod run;
mod toy_backend;

pub use backend::{
    write_manifest, read_manifest, ArtifactKind, ArtifactManifest, BackendError, EpochStats, Invocation, NullBackend,
    TrainerBackend, TrainingJob, TrainingRun,
};
pub use config::{
    resolve_checkpoint_chain, validate_config, DatasetDecl, Diagnostic, LrSchedule, Optimizer, PipelineConfig,
    StageConfig, Task, TrainingHyperparams,
};
pub use dataset::{load_examples, SplitExamples};
pub use external::ExternalBackend;
pub use registry::{hash_dir, hash_file, ArtifactRecord, Registry};
pub use run::{run_all, run_stage, RunOptions, StageOutcome, StageReport};
pub use toy_backend::ToyBackend;

pub(crate) use external::run_command;
pub(crate) use toy_backend::load_model;

use crate::workspace::WorkspaceError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("cannot parse pipeline config: {0}")]
    ConfigParse(String),
    #[error("config is not runnable: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidConfig(Vec<Diagnostic>),
    #[error("dependency cycle: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("unknown stage `{0}`")]
    UnknownStage(String),
    #[error("stage `{stage}` bases on unknown `{base}`")]
    UnknownBase { stage: String, base: String },
    #[error("stage `{stage}` needs the artifact of `{base}`, which is not trained (use --recursive)")]
    MissingArtifact { stage: String, base: String },
    #[error("artifact of `{0}` is stale relative to its base or config (use --recursive)")]
    StaleArtifact(String),
    #[error("stage `{stage}` has an empty TRAIN split")]
    DatasetEmpty { stage: String },
    #[error("dataset {path}: line {line}: {message}")]
    DatasetSchema { path: String, line: usize, message: String },
    #[error("backend failed in stage `{stage}` at epoch {epoch}: {source}")]
    BackendFailure {
        stage: String,
        epoch: usize,
        #[source]
        source: BackendError,
    },
    #[error("backend failed preparing `{stage}`: {source}")]
    BackendSetup {
        stage: String,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    pub fn class(&self) -> &'static str {
        match self {
            PipelineError::ConfigParse(_) => "ConfigParse",
            PipelineError::InvalidConfig(d) => d.first().map_or("InvalidConfig", Diagnostic::class),
            PipelineError::CycleDetected(_) => "CycleDetected",
            PipelineError::UnknownStage(_) => "UnknownStage",
            PipelineError::UnknownBase { .. } => "UnknownBase",
            PipelineError::MissingArtifact { .. } => "MissingArtifact",
            PipelineError::StaleArtifact(_) => "StaleArtifact",
            PipelineError::DatasetEmpty { .. } => "DatasetEmpty",
            PipelineError::DatasetSchema { .. } => "SchemaError",
            PipelineError::BackendFailure { .. } | PipelineError::BackendSetup { .. } => "BackendFailure",
            PipelineError::Workspace(e) => e.class(),
            PipelineError::Io(_) => "IoError",
        }
    }
}
