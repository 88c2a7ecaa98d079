//! Drives an external fine-tuning program over a small command protocol.
//!
//! ```text
//! <cmd> import      --checkpoint <id> --out <dir>
//! <cmd> train-epoch --job <job.json> --base <dir> --state <dir> --epoch <n>
//! <cmd> export      --state <dir> --out <dir>
//! <cmd> generate    --checkpoint <dir> --max-new-tokens <n>
//! ```
//!
//! `train-epoch` persists its own state under `--state` and prints one JSON
//! line `{"epoch":n,"train_loss":x,"validation_loss":y}` as the last line of
//! stdout. `generate` reads `{"id","source"}` lines on stdin and writes
//! `{"id","generated"}` lines on stdout.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::Serialize;

use super::backend::{
    write_manifest, ArtifactKind, ArtifactManifest, BackendError, EpochStats, TrainerBackend, TrainingJob, TrainingRun,
};
use super::config::{Task, TrainingHyperparams};
use crate::language::LanguageSet;
use crate::workspace::write_atomic;

#[derive(Debug, Clone)]
pub struct ExternalBackend {
    /// Program followed by fixed leading arguments.
    pub command: Vec<String>,
}

/// Job description handed to the external program.
#[derive(Debug, Serialize)]
struct JobFile<'a> {
    stage_id: &'a str,
    base: &'a str,
    task: Task,
    hyperparams: &'a TrainingHyperparams,
    dataset: &'a Path,
    input_field: &'a str,
    target_field: &'a str,
    seed: u64,
}

impl ExternalBackend {
    pub fn new(command: Vec<String>) -> Self {
        assert!(!command.is_empty(), "external backend needs a program");
        ExternalBackend { command }
    }

    fn run(&self, args: &[&str]) -> Result<String, BackendError> {
        run_command(&self.command, args, None)
    }
}

pub(crate) fn run_command(command: &[String], args: &[&str], stdin: Option<&[u8]>) -> Result<String, BackendError> {
    let mut child = Command::new(&command[0])
        .args(&command[1..])
        .args(args)
        .stdin(if stdin.is_some() { Stdio::piped() } else { Stdio::null() })
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| BackendError::Failed(format!("cannot start `{}`: {e}", command[0])))?;
    if let Some(input) = stdin {
        let mut pipe = child.stdin.take().expect("piped stdin");
        let input = input.to_vec();
        // Written from a thread so a chatty child cannot deadlock on stdout.
        std::thread::spawn(move || pipe.write_all(&input));
    }
    let out = child.wait_with_output()?;
    if !out.status.success() {
        let err = String::from_utf8_lossy(&out.stderr);
        let tail: Vec<&str> = err.lines().rev().take(5).collect();
        let tail: Vec<&str> = tail.into_iter().rev().collect();
        return Err(BackendError::Failed(format!("`{} {}` exited with {}: {}", command[0], args[0], out.status, tail.join(" | "))));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

struct ExternalRun<'a> {
    backend: &'a ExternalBackend,
    language: LanguageSet,
    stage_id: String,
    task: Task,
    max_new_tokens: usize,
    job_file: PathBuf,
    base_dir: PathBuf,
    state_dir: PathBuf,
}

fn path_arg(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

impl TrainerBackend for ExternalBackend {
    fn name(&self) -> &'static str {
        "external"
    }

    fn import_base(&self, checkpoint: &str, artifact_dir: &Path) -> Result<(), BackendError> {
        std::fs::create_dir_all(artifact_dir)?;
        self.run(&["import", "--checkpoint", checkpoint, "--out", &path_arg(artifact_dir)])?;
        write_manifest(
            artifact_dir,
            &ArtifactManifest {
                kind: ArtifactKind::External,
                id: checkpoint.into(),
                task: None,
                max_new_tokens: None,
                language: None,
                command: self.command.clone(),
            },
        )?;
        Ok(())
    }

    fn start<'a>(
        &'a self,
        job: &TrainingJob,
        base_dir: &Path,
        state_dir: &Path,
    ) -> Result<Box<dyn TrainingRun + 'a>, BackendError> {
        std::fs::create_dir_all(state_dir)?;
        let job_file = state_dir.join("job.json");
        let desc = JobFile {
            stage_id: &job.stage_id,
            base: &job.base,
            task: job.task,
            hyperparams: &job.hyperparams,
            dataset: &job.dataset_path,
            input_field: &job.input_field,
            target_field: &job.target_field,
            seed: job.seed,
        };
        write_atomic(&job_file, &serde_json::to_vec_pretty(&desc).map_err(std::io::Error::from)?)?;
        std::fs::write(state_dir.join("base"), path_arg(base_dir))?;
        Ok(Box::new(ExternalRun {
            backend: self,
            language: job.dataset.language.clone(),
            stage_id: job.stage_id.clone(),
            task: job.task,
            max_new_tokens: job.hyperparams.max_new_tokens,
            job_file,
            base_dir: base_dir.into(),
            state_dir: state_dir.into(),
        }))
    }

    fn resume<'a>(&'a self, job: &TrainingJob, state_dir: &Path) -> Result<Box<dyn TrainingRun + 'a>, BackendError> {
        let base = std::fs::read_to_string(state_dir.join("base")).map_err(|_| BackendError::BadArtifact(state_dir.into()))?;
        Ok(Box::new(ExternalRun {
            backend: self,
            language: job.dataset.language.clone(),
            stage_id: job.stage_id.clone(),
            task: job.task,
            max_new_tokens: job.hyperparams.max_new_tokens,
            job_file: state_dir.join("job.json"),
            base_dir: base.trim().into(),
            state_dir: state_dir.into(),
        }))
    }
}

impl TrainingRun for ExternalRun<'_> {
    fn train_epoch(&mut self, epoch: usize) -> Result<EpochStats, BackendError> {
        let out = self.backend.run(&[
            "train-epoch",
            "--job",
            &path_arg(&self.job_file),
            "--base",
            &path_arg(&self.base_dir),
            "--state",
            &path_arg(&self.state_dir),
            "--epoch",
            &epoch.to_string(),
        ])?;
        let last = out.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
        let stats: EpochStats = serde_json::from_str(last)
            .map_err(|e| BackendError::Failed(format!("unreadable epoch report `{last}`: {e}")))?;
        if stats.epoch != epoch {
            return Err(BackendError::Failed(format!("program reported epoch {} for epoch {epoch}", stats.epoch)));
        }
        Ok(stats)
    }

    fn save_state(&self, _state_dir: &Path) -> Result<(), BackendError> {
        // The program persists its own state after every epoch.
        Ok(())
    }

    fn export(&self, artifact_dir: &Path) -> Result<(), BackendError> {
        std::fs::create_dir_all(artifact_dir)?;
        self.backend.run(&["export", "--state", &path_arg(&self.state_dir), "--out", &path_arg(artifact_dir)])?;
        write_manifest(
            artifact_dir,
            &ArtifactManifest {
                kind: ArtifactKind::External,
                id: self.stage_id.clone(),
                task: Some(self.task),
                max_new_tokens: Some(self.max_new_tokens),
                language: Some(self.language.clone()),
                command: self.backend.command.clone(),
            },
        )?;
        Ok(())
    }
}
