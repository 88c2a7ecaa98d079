//! Stage execution: fingerprints, resume and registration.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::backend::{EpochStats, TrainerBackend, TrainingJob};
use super::config::{resolve_checkpoint_chain, validate_config, PipelineConfig, StageConfig};
use super::dataset::load_examples;
use super::registry::{hash_bytes, hash_dir, hash_file, ArtifactRecord, Registry};
use super::PipelineError;
use crate::workspace::{write_atomic, WorkspaceConfig, WorkspaceLock};

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Train missing or stale ancestors first instead of failing.
    pub recursive: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageOutcome {
    Imported,
    Trained,
    Resumed,
    UpToDate,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub stage_id: String,
    pub outcome: StageOutcome,
    pub epochs: Vec<EpochStats>,
    pub artifact: PathBuf,
    pub content_hash: String,
    pub wall_time: Duration,
}

#[derive(Debug, PartialEq, Eq)]
enum Status {
    Missing,
    Stale,
    Fresh,
}

#[derive(Serialize, Deserialize)]
struct Progress {
    fingerprint: String,
    epochs: Vec<EpochStats>,
}

const PROGRESS_FILE: &str = "progress.json";

struct Runner<'a> {
    config: &'a PipelineConfig,
    backend: &'a dyn TrainerBackend,
    ws: &'a WorkspaceConfig,
    seed: u64,
    registry: Registry,
}

/// Trains one stage. Without `recursive`, its base must already be
/// registered and fresh (external checkpoints are imported on demand).
pub fn run_stage(
    config: &PipelineConfig,
    stage_id: &str,
    backend: &dyn TrainerBackend,
    ws: &WorkspaceConfig,
    opts: RunOptions,
) -> Result<Vec<StageReport>, PipelineError> {
    check_config(config)?;
    let chain = resolve_checkpoint_chain(config, stage_id)?;
    let _lock = WorkspaceLock::acquire(ws)?;
    let mut runner = Runner::new(config, backend, ws, opts.seed)?;
    let mut reports = Vec::new();
    if opts.recursive {
        for id in &chain {
            reports.push(runner.ensure(id)?);
        }
        return Ok(reports);
    }
    let stage = config.stage(stage_id).expect("resolved");
    if config.is_external(&stage.base) {
        reports.push(runner.ensure(&stage.base)?);
    } else {
        match runner.status(&stage.base)? {
            Status::Missing => {
                return Err(PipelineError::MissingArtifact { stage: stage_id.into(), base: stage.base.clone() })
            }
            Status::Stale => return Err(PipelineError::StaleArtifact(stage.base.clone())),
            Status::Fresh => {}
        }
    }
    reports.push(runner.ensure(stage_id)?);
    Ok(reports)
}

/// Brings every stage up to date in dependency order.
pub fn run_all(
    config: &PipelineConfig,
    backend: &dyn TrainerBackend,
    ws: &WorkspaceConfig,
    opts: RunOptions,
) -> Result<Vec<StageReport>, PipelineError> {
    check_config(config)?;
    let order = config.topological_order()?;
    let _lock = WorkspaceLock::acquire(ws)?;
    let mut runner = Runner::new(config, backend, ws, opts.seed)?;
    order.iter().map(|id| runner.ensure(id)).collect()
}

fn check_config(config: &PipelineConfig) -> Result<(), PipelineError> {
    let diags = validate_config(config);
    if diags.is_empty() {
        Ok(())
    } else {
        Err(PipelineError::InvalidConfig(diags))
    }
}

impl<'a> Runner<'a> {
    fn new(
        config: &'a PipelineConfig,
        backend: &'a dyn TrainerBackend,
        ws: &'a WorkspaceConfig,
        seed: u64,
    ) -> Result<Self, PipelineError> {
        let registry = Registry::load(&ws.registry_path())?;
        Ok(Runner { config, backend, ws, seed, registry })
    }

    fn dataset_path(&self, stage: &StageConfig) -> PathBuf {
        let decl = self.config.dataset(&stage.dataset).expect("validated");
        self.config.dataset_path(decl)
    }

    fn config_hash(&self, stage: &StageConfig) -> String {
        let mut s = stage.clone();
        s.note = None;
        let v = serde_json::json!({ "stage": s, "seed": self.seed, "backend": self.backend.name() });
        hash_bytes(v.to_string().as_bytes())
    }

    fn artifact_hash(&self, record: &ArtifactRecord) -> Option<String> {
        let dir = self.ws.root().join(&record.path);
        dir.is_dir().then(|| hash_dir(&dir).ok()).flatten()
    }

    fn status(&self, id: &str) -> Result<Status, PipelineError> {
        let Some(record) = self.registry.get(id) else { return Ok(Status::Missing) };
        match self.artifact_hash(record) {
            None => return Ok(Status::Missing),
            Some(h) if h != record.content_hash => return Ok(Status::Stale),
            Some(_) => {}
        }
        if record.backend != self.backend.name() {
            return Ok(Status::Stale);
        }
        let Some(stage) = self.config.stage(id) else { return Ok(Status::Fresh) };
        let fresh = record.config_hash.as_deref() == Some(self.config_hash(stage).as_str())
            && record.dataset_hash.as_deref() == Some(hash_file(&self.dataset_path(stage))?.as_str())
            && record.base.as_deref() == Some(stage.base.as_str())
            && self.status(&stage.base)? == Status::Fresh
            && record.base_hash.as_ref() == self.registry.get(&stage.base).map(|b| &b.content_hash);
        Ok(if fresh { Status::Fresh } else { Status::Stale })
    }

    fn relative(&self, dir: &Path) -> PathBuf {
        dir.strip_prefix(self.ws.root()).map(Path::to_path_buf).unwrap_or_else(|_| dir.to_path_buf())
    }

    fn ensure(&mut self, id: &str) -> Result<StageReport, PipelineError> {
        if self.status(id)? == Status::Fresh {
            let r = self.registry.get(id).expect("fresh implies registered");
            return Ok(StageReport {
                stage_id: id.into(),
                outcome: StageOutcome::UpToDate,
                epochs: r.epochs.clone(),
                artifact: r.path.clone(),
                content_hash: r.content_hash.clone(),
                wall_time: Duration::ZERO,
            });
        }
        match self.config.stage(id) {
            Some(stage) => self.train(stage),
            None => self.import(id),
        }
    }

    fn import(&mut self, id: &str) -> Result<StageReport, PipelineError> {
        let started = Instant::now();
        let dir = self.ws.checkpoint_dir(id);
        let tmp = fresh_dir(&dir.with_extension("partial"))?;
        self.backend
            .import_base(id, &tmp)
            .map_err(|source| PipelineError::BackendSetup { stage: id.into(), source })?;
        replace_dir(&tmp, &dir)?;
        let record = ArtifactRecord {
            path: self.relative(&dir),
            content_hash: hash_dir(&dir)?,
            base: None,
            base_hash: None,
            config_hash: None,
            dataset_hash: None,
            backend: self.backend.name().into(),
            epochs: Vec::new(),
        };
        self.register(id, record, StageOutcome::Imported, started)
    }

    fn train(&mut self, stage: &StageConfig) -> Result<StageReport, PipelineError> {
        let started = Instant::now();
        let id = stage.id.as_str();
        let setup = |source| PipelineError::BackendSetup { stage: id.into(), source };
        let base = self
            .registry
            .get(&stage.base)
            .ok_or_else(|| PipelineError::MissingArtifact { stage: id.into(), base: stage.base.clone() })?
            .clone();
        let dataset_path = self.dataset_path(stage);
        let examples = load_examples(&dataset_path, &stage.input_field, &stage.target_field)?;
        if examples.train.is_empty() {
            return Err(PipelineError::DatasetEmpty { stage: id.into() });
        }
        let config_hash = self.config_hash(stage);
        let dataset_hash = hash_file(&dataset_path)?;
        let fingerprint = hash_bytes(format!("{config_hash}:{dataset_hash}:{}", base.content_hash).as_bytes());
        let job = TrainingJob {
            stage_id: id.into(),
            base: stage.base.clone(),
            task: stage.task,
            hyperparams: stage.hyperparams.clone(),
            dataset: stage.dataset.clone(),
            dataset_path,
            input_field: stage.input_field.clone(),
            target_field: stage.target_field.clone(),
            examples,
            seed: self.seed,
        };

        let run_dir = self.ws.run_dir(id);
        let progress = read_progress(&run_dir).filter(|p| p.fingerprint == fingerprint && !p.epochs.is_empty());
        let (mut run, mut epochs, outcome) = match progress {
            Some(p) => {
                log::info!("{id}: resuming after epoch {}", p.epochs.len());
                (self.backend.resume(&job, &run_dir).map_err(setup)?, p.epochs, StageOutcome::Resumed)
            }
            None => {
                fresh_dir(&run_dir)?;
                let base_dir = self.ws.root().join(&base.path);
                (self.backend.start(&job, &base_dir, &run_dir).map_err(setup)?, Vec::new(), StageOutcome::Trained)
            }
        };

        let total = stage.hyperparams.epochs;
        while epochs.len() < total && !early_stop(&epochs, stage.hyperparams.early_stopping_patience) {
            let epoch = epochs.len() + 1;
            let fail = |source| PipelineError::BackendFailure { stage: id.into(), epoch, source };
            let stats = run.train_epoch(epoch).map_err(fail)?;
            run.save_state(&run_dir).map_err(fail)?;
            log::info!(
                "{id}: epoch {epoch}/{total} train_loss={:.4} validation_loss={}",
                stats.train_loss,
                stats.validation_loss.map_or("-".into(), |v| format!("{v:.4}"))
            );
            epochs.push(stats);
            let p = Progress { fingerprint: fingerprint.clone(), epochs: epochs.clone() };
            write_atomic(&run_dir.join(PROGRESS_FILE), &serde_json::to_vec_pretty(&p).map_err(std::io::Error::from)?)?;
        }

        let dir = self.ws.checkpoint_dir(id);
        let tmp = fresh_dir(&dir.with_extension("partial"))?;
        run.export(&tmp).map_err(setup)?;
        drop(run);
        replace_dir(&tmp, &dir)?;
        let record = ArtifactRecord {
            path: self.relative(&dir),
            content_hash: hash_dir(&dir)?,
            base: Some(stage.base.clone()),
            base_hash: Some(base.content_hash),
            config_hash: Some(config_hash),
            dataset_hash: Some(dataset_hash),
            backend: self.backend.name().into(),
            epochs,
        };
        let report = self.register(id, record, outcome, started)?;
        fs::remove_dir_all(&run_dir).ok();
        Ok(report)
    }

    fn register(
        &mut self,
        id: &str,
        record: ArtifactRecord,
        outcome: StageOutcome,
        started: Instant,
    ) -> Result<StageReport, PipelineError> {
        let report = StageReport {
            stage_id: id.into(),
            outcome,
            epochs: record.epochs.clone(),
            artifact: record.path.clone(),
            content_hash: record.content_hash.clone(),
            wall_time: started.elapsed(),
        };
        self.registry.artifacts.insert(id.into(), record);
        self.registry.save(&self.ws.registry_path())?;
        Ok(report)
    }
}

/// True once validation loss has not improved for `patience` epochs.
fn early_stop(epochs: &[EpochStats], patience: Option<usize>) -> bool {
    let Some(patience) = patience else { return false };
    let losses: Vec<(usize, f64)> =
        epochs.iter().enumerate().filter_map(|(i, e)| e.validation_loss.map(|v| (i, v))).collect();
    let Some(&(best_at, _)) = losses.iter().min_by(|a, b| a.1.total_cmp(&b.1)) else { return false };
    epochs.len() - 1 - best_at >= patience
}

fn read_progress(run_dir: &Path) -> Option<Progress> {
    serde_json::from_str(&fs::read_to_string(run_dir.join(PROGRESS_FILE)).ok()?).ok()
}

fn fresh_dir(dir: &Path) -> std::io::Result<PathBuf> {
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::create_dir_all(dir)?;
    Ok(dir.to_path_buf())
}

fn replace_dir(from: &Path, to: &Path) -> std::io::Result<()> {
    if to.exists() {
        fs::remove_dir_all(to)?;
    }
    fs::rename(from, to)
}
