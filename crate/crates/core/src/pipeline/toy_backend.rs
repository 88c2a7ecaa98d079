//! Trains [`crate::model::ToySeq2Seq`] in process.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::backend::{
    read_manifest, write_manifest, ArtifactKind, ArtifactManifest, BackendError, EpochStats, TrainerBackend,
    TrainingJob, TrainingRun,
};
use super::config::Task;
use crate::language::LanguageSet;
use crate::model::{AdamW, Encoded, LinearDecay, ToySeq2Seq};
use crate::rng;
use crate::workspace::write_atomic;

pub const MODEL_FILE: &str = "model.json";

/// Learning-rate multiplier applied on top of the configured `lr_max`. A
/// tiny randomly initialised model barely moves at transformer learning
/// rates, so the schedule's shape is kept and only its scale changes.
pub const DEFAULT_LR_SCALE: f64 = 1000.0;

#[derive(Debug, Clone)]
pub struct ToyBackend {
    pub lr_scale: f64,
}

impl Default for ToyBackend {
    fn default() -> Self {
        ToyBackend { lr_scale: DEFAULT_LR_SCALE }
    }
}

impl ToyBackend {
    pub fn new() -> Self {
        Self::default()
    }
}

#[derive(Serialize, Deserialize)]
struct RunState {
    global_step: usize,
    optimizer: AdamW,
}

struct ToyRun {
    stage_id: String,
    language: LanguageSet,
    task: Task,
    seed: u64,
    max_new_tokens: usize,
    batch_size: usize,
    schedule: LinearDecay,
    model: ToySeq2Seq<f32>,
    optimizer: AdamW,
    global_step: usize,
    train: Vec<Encoded>,
    validation: Vec<Encoded>,
}

fn failed(e: impl std::fmt::Display) -> BackendError {
    BackendError::Failed(e.to_string())
}

pub(crate) fn load_model(dir: &Path) -> Result<ToySeq2Seq<f32>, BackendError> {
    let text = fs::read_to_string(dir.join(MODEL_FILE)).map_err(|_| BackendError::BadArtifact(dir.into()))?;
    ToySeq2Seq::from_json(&text).map_err(failed)
}

fn save_model(dir: &Path, model: &ToySeq2Seq<f32>) -> Result<(), BackendError> {
    write_atomic(&dir.join(MODEL_FILE), model.to_json().as_bytes())?;
    Ok(())
}

/// Seed for fresh weights, derived from the checkpoint name.
fn import_seed(checkpoint: &str) -> u64 {
    use rand::RngCore;
    rng::derived(0, &format!("toy/import/{checkpoint}")).next_u64()
}

impl ToyBackend {
    fn build(
        &self,
        job: &TrainingJob,
        model: ToySeq2Seq<f32>,
        optimizer: AdamW,
        global_step: usize,
    ) -> ToyRun {
        let steps_per_epoch = job.examples.train.len().div_ceil(job.hyperparams.batch_size.max(1));
        ToyRun {
            stage_id: job.stage_id.clone(),
            language: job.dataset.language.clone(),
            task: job.task,
            seed: job.seed,
            max_new_tokens: job.hyperparams.max_new_tokens,
            batch_size: job.hyperparams.batch_size.max(1),
            schedule: LinearDecay {
                lr_max: job.hyperparams.lr_max * self.lr_scale,
                total_steps: steps_per_epoch * job.hyperparams.epochs,
            },
            train: job.examples.train.iter().map(|e| model.encode(e)).collect(),
            validation: job.examples.validation.iter().map(|e| model.encode(e)).collect(),
            model,
            optimizer,
            global_step,
        }
    }
}

impl TrainerBackend for ToyBackend {
    fn name(&self) -> &'static str {
        "toy"
    }

    fn import_base(&self, checkpoint: &str, artifact_dir: &Path) -> Result<(), BackendError> {
        fs::create_dir_all(artifact_dir)?;
        save_model(artifact_dir, &ToySeq2Seq::new(import_seed(checkpoint)))?;
        write_manifest(
            artifact_dir,
            &ArtifactManifest { kind: ArtifactKind::Toy, id: checkpoint.into(), task: None, max_new_tokens: None, command: Vec::new(), language: None },
        )?;
        Ok(())
    }

    fn start<'a>(
        &'a self,
        job: &TrainingJob,
        base_dir: &Path,
        _state_dir: &Path,
    ) -> Result<Box<dyn TrainingRun + 'a>, BackendError> {
        let manifest = read_manifest(base_dir)?;
        let mut model = match manifest.kind {
            ArtifactKind::Toy => load_model(base_dir)?,
            _ => return Err(BackendError::Failed(format!("base `{}` is not a toy artifact", manifest.id))),
        };
        let mut all = job.examples.train.clone();
        all.extend(job.examples.validation.iter().cloned());
        model.extend_vocab(&all);
        Ok(Box::new(self.build(job, model, AdamW::default(), 0)))
    }

    fn resume<'a>(&'a self, job: &TrainingJob, state_dir: &Path) -> Result<Box<dyn TrainingRun + 'a>, BackendError> {
        let model = load_model(state_dir)?;
        let text = fs::read_to_string(state_dir.join("optimizer.json"))
            .map_err(|_| BackendError::BadArtifact(state_dir.into()))?;
        let state: RunState = serde_json::from_str(&text).map_err(failed)?;
        Ok(Box::new(self.build(job, model, state.optimizer, state.global_step)))
    }
}

impl TrainingRun for ToyRun {
    fn train_epoch(&mut self, epoch: usize) -> Result<EpochStats, BackendError> {
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut rng::derived(self.seed, &format!("toy/shuffle/{}/{epoch}", self.stage_id)));
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(self.batch_size) {
            let batch: Vec<&Encoded> = chunk.iter().map(|&i| &self.train[i]).collect();
            let lr = self.schedule.at(self.global_step);
            loss_sum += self.model.train_step(&batch, &mut self.optimizer, lr);
            self.global_step += 1;
            batches += 1;
        }
        let train_loss = if batches == 0 { 0.0 } else { loss_sum / batches as f64 };
        if !train_loss.is_finite() {
            return Err(BackendError::Failed(format!("non-finite training loss at epoch {epoch}")));
        }
        let validation_loss = if self.validation.is_empty() {
            None
        } else {
            let (sum, tokens) = self.model.loss(&self.validation);
            Some(if tokens == 0 { 0.0 } else { sum / tokens as f64 })
        };
        Ok(EpochStats { epoch, train_loss, validation_loss })
    }

    fn save_state(&self, state_dir: &Path) -> Result<(), BackendError> {
        fs::create_dir_all(state_dir)?;
        save_model(state_dir, &self.model)?;
        let state = RunState { global_step: self.global_step, optimizer: self.optimizer.clone() };
        write_atomic(&state_dir.join("optimizer.json"), &serde_json::to_vec(&state).map_err(failed)?)?;
        Ok(())
    }

    fn export(&self, artifact_dir: &Path) -> Result<(), BackendError> {
        fs::create_dir_all(artifact_dir)?;
        save_model(artifact_dir, &self.model)?;
        write_manifest(
            artifact_dir,
            &ArtifactManifest {
                kind: ArtifactKind::Toy,
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
