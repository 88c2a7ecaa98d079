mod common;

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use radsum_core::pipeline::*;
use radsum_core::workspace::{WorkspaceConfig, WorkspaceLock};
use radsum_core::{CorpusDescriptor, Language};

const FINAL: &str = "rr1000_EN_PT_GE";

#[test]
fn shipped_config_is_valid_and_chains_through_german_stage() {
    let config = common::shipped_config();
    assert_eq!(validate_config(&config), vec![]);
    assert_eq!(
        resolve_checkpoint_chain(&config, FINAL).unwrap(),
        ["google/mt5-base", "summaries_EN", "rr1000_EN", "rr1000_PT", "rr1000_GE", FINAL]
    );
    let chain = resolve_checkpoint_chain(&config, "translation_EN-PT").unwrap();
    assert_eq!(chain, ["google/mt5-base", "translation_EN-PT"]);
    assert!(config.stages.iter().all(|s| s.hyperparams.lr_max == 2e-5));
}

fn train_hp(inv: &Invocation) -> Option<(&str, &TrainingHyperparams, &CorpusDescriptor, &str, &str)> {
    match inv {
        Invocation::Train { stage_id, hyperparams, dataset, input_field, target_field, .. } => {
            Some((stage_id, hyperparams, dataset, input_field, target_field))
        }
        Invocation::Import { .. } => None,
    }
}

#[test]
fn null_backend_sees_seven_invocations_with_exact_hyperparams() {
    let dir = tempfile::tempdir().unwrap();
    let (ws, config) = common::shipped_workspace(dir.path(), 30);
    let backend = NullBackend::new();
    let reports = run_all(&config, &backend, &ws, RunOptions::default()).unwrap();
    assert_eq!(reports.len(), 7);
    let inv = backend.invocations();
    assert_eq!(inv.len(), 7);
    assert_eq!(inv[0], Invocation::Import { checkpoint: "google/mt5-base".into() });

    let expect = [
        ("summaries_EN", 10, 8, 50),
        ("rr1000_EN", 10, 1, 1000),
        ("translation_EN-PT", 20, 1, 1000),
        ("rr1000_PT", 10, 1, 1000),
        ("rr1000_GE", 17, 1, 1000),
        (FINAL, 10, 1, 1000),
    ];
    for (id, epochs, bs, mntp) in expect {
        let (_, hp, ..) = inv.iter().filter_map(train_hp).find(|t| t.0 == id).unwrap();
        assert_eq!((hp.epochs, hp.batch_size, hp.max_new_tokens), (epochs, bs, mntp), "{id}");
        assert_eq!(hp.lr_max, 2e-5);
        assert_eq!(hp.optimizer, Optimizer::AdamW);
        assert_eq!(hp.lr_schedule, LrSchedule::LinearDecayToZero);
        assert_eq!(hp.early_stopping_patience, None);
    }
    let (_, _, ds, input, target) = inv.iter().filter_map(train_hp).find(|t| t.0 == "summaries_EN").unwrap();
    assert_eq!((ds.name.as_str(), input, target), ("MARC", "review_body", "review_title"));

    // Second run finds everything current.
    let again = run_all(&config, &backend, &ws, RunOptions::default()).unwrap();
    assert!(again.iter().all(|r| r.outcome == StageOutcome::UpToDate));
    assert_eq!(backend.invocations().len(), 7);
}

#[test]
fn non_recursive_needs_trained_base_and_recursive_trains_chain() {
    let dir = tempfile::tempdir().unwrap();
    let (ws, config) = common::shipped_workspace(dir.path(), 20);
    let backend = NullBackend::new();
    let err = run_stage(&config, "rr1000_PT", &backend, &ws, RunOptions::default()).unwrap_err();
    assert_eq!(err.class(), "MissingArtifact");

    let reports = run_stage(&config, "rr1000_PT", &backend, &ws, RunOptions { recursive: true, seed: 0 }).unwrap();
    let ids: Vec<_> = reports.iter().map(|r| r.stage_id.as_str()).collect();
    assert_eq!(ids, ["google/mt5-base", "summaries_EN", "rr1000_EN", "rr1000_PT"]);
    // External checkpoints are imported on demand.
    run_stage(&config, "translation_EN-PT", &backend, &ws, RunOptions::default()).unwrap();
}

#[test]
fn changed_ancestor_makes_descendants_stale() {
    let dir = tempfile::tempdir().unwrap();
    let (ws, mut config) = common::shipped_workspace(dir.path(), 20);
    let backend = NullBackend::new();
    let opts = RunOptions { recursive: true, seed: 0 };
    run_stage(&config, "rr1000_PT", &backend, &ws, opts).unwrap();

    config.stages.iter_mut().find(|s| s.id == "summaries_EN").unwrap().hyperparams.epochs = 3;
    let err = run_stage(&config, "rr1000_PT", &backend, &ws, RunOptions::default()).unwrap_err();
    assert!(matches!(err, PipelineError::StaleArtifact(ref id) if id == "rr1000_EN"), "{err}");

    let reports = run_stage(&config, "rr1000_PT", &backend, &ws, opts).unwrap();
    let outcomes: Vec<_> = reports.iter().map(|r| r.outcome).collect();
    assert_eq!(
        outcomes,
        [StageOutcome::UpToDate, StageOutcome::Trained, StageOutcome::Trained, StageOutcome::Trained]
    );
}

#[test]
fn empty_train_split_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (ws, config) = common::shipped_workspace(dir.path(), 20);
    let path = config.dataset_path(config.corpora.iter().find(|d| d.name == "MARC").unwrap());
    let text = std::fs::read_to_string(&path).unwrap();
    let kept: String = text.lines().filter(|l| !l.contains("\"train\"")).map(|l| format!("{l}\n")).collect();
    std::fs::write(&path, kept).unwrap();
    let err = run_stage(&config, "summaries_EN", &NullBackend::new(), &ws, RunOptions::default()).unwrap_err();
    assert!(matches!(err, PipelineError::DatasetEmpty { ref stage } if stage == "summaries_EN"));
}

#[test]
fn lock_excludes_concurrent_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (ws, config) = common::shipped_workspace(dir.path(), 20);
    let held = WorkspaceLock::acquire(&ws).unwrap();
    let err = run_all(&config, &NullBackend::new(), &ws, RunOptions::default()).unwrap_err();
    assert_eq!(err.class(), "WorkspaceLocked");
    drop(held);
    run_all(&config, &NullBackend::new(), &ws, RunOptions::default()).unwrap();
}

/// Toy backend that fails once every run has done `fail_after` epochs.
struct Interrupting {
    inner: ToyBackend,
    fail_after: AtomicUsize,
}

struct InterruptingRun<'a> {
    inner: Box<dyn TrainingRun + 'a>,
    budget: &'a AtomicUsize,
}

impl TrainingRun for InterruptingRun<'_> {
    fn train_epoch(&mut self, epoch: usize) -> Result<EpochStats, BackendError> {
        if self.budget.load(Ordering::SeqCst) == 0 {
            return Err(BackendError::Failed("simulated crash".into()));
        }
        self.budget.fetch_sub(1, Ordering::SeqCst);
        self.inner.train_epoch(epoch)
    }
    fn save_state(&self, dir: &Path) -> Result<(), BackendError> {
        self.inner.save_state(dir)
    }
    fn export(&self, dir: &Path) -> Result<(), BackendError> {
        self.inner.export(dir)
    }
}

impl TrainerBackend for Interrupting {
    fn name(&self) -> &'static str {
        self.inner.name()
    }
    fn import_base(&self, checkpoint: &str, dir: &Path) -> Result<(), BackendError> {
        self.inner.import_base(checkpoint, dir)
    }
    fn start<'a>(&'a self, job: &TrainingJob, base: &Path, state: &Path) -> Result<Box<dyn TrainingRun + 'a>, BackendError> {
        Ok(Box::new(InterruptingRun { inner: self.inner.start(job, base, state)?, budget: &self.fail_after }))
    }
    fn resume<'a>(&'a self, job: &TrainingJob, state: &Path) -> Result<Box<dyn TrainingRun + 'a>, BackendError> {
        Ok(Box::new(InterruptingRun { inner: self.inner.resume(job, state)?, budget: &self.fail_after }))
    }
}

fn registry_text(ws: &WorkspaceConfig) -> String {
    std::fs::read_to_string(ws.registry_path()).unwrap()
}

#[test]
fn resumed_run_registers_identical_metadata() {
    let stage = "rr1000_EN";
    let mut config = common::shipped_config();
    for s in &mut config.stages {
        s.hyperparams.epochs = 4;
        s.hyperparams.batch_size = 2;
    }
    let opts = RunOptions { recursive: true, seed: 11 };

    let a = tempfile::tempdir().unwrap();
    let (ws_a, mut cfg_a) = common::shipped_workspace(a.path(), 24);
    cfg_a.stages = config.stages.clone();
    run_stage(&cfg_a, stage, &ToyBackend::new(), &ws_a, opts).unwrap();

    let b = tempfile::tempdir().unwrap();
    let (ws_b, mut cfg_b) = common::shipped_workspace(b.path(), 24);
    cfg_b.stages = config.stages.clone();
    // summaries_EN takes 4 epochs; crash two epochs into rr1000_EN.
    let crashing = Interrupting { inner: ToyBackend::new(), fail_after: AtomicUsize::new(6) };
    let err = run_stage(&cfg_b, stage, &crashing, &ws_b, opts).unwrap_err();
    match err {
        PipelineError::BackendFailure { ref stage, epoch, .. } => assert_eq!((stage.as_str(), epoch), ("rr1000_EN", 3)),
        other => panic!("unexpected {other}"),
    }
    let resumed = run_stage(&cfg_b, stage, &ToyBackend::new(), &ws_b, opts).unwrap();
    assert_eq!(resumed.last().unwrap().outcome, StageOutcome::Resumed);

    assert_eq!(registry_text(&ws_a), registry_text(&ws_b));
    let reg = Registry::load(&ws_a.registry_path()).unwrap();
    let rec = reg.get(stage).unwrap();
    assert_eq!(rec.epochs.len(), 4);
    assert!(rec.epochs.iter().all(|e| e.validation_loss.is_some()));
    assert_eq!(rec.base_hash.as_ref(), Some(&reg.get("summaries_EN").unwrap().content_hash));
}

#[test]
fn toy_training_lowers_loss_and_records_every_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let (ws, mut config) = common::shipped_workspace(dir.path(), 40);
    let s = config.stages.iter_mut().find(|s| s.id == "summaries_EN").unwrap();
    s.hyperparams.epochs = 5;
    let reports = run_stage(&config, "summaries_EN", &ToyBackend::new(), &ws, RunOptions::default()).unwrap();
    let epochs = &reports.last().unwrap().epochs;
    assert_eq!(epochs.len(), 5);
    assert!(epochs[4].train_loss < epochs[0].train_loss);
    let manifest = read_manifest(&ws.root().join(&reports[1].artifact)).unwrap();
    assert_eq!(manifest.kind, ArtifactKind::Toy);
    assert_eq!(manifest.max_new_tokens, Some(50));
}

#[test]
fn early_stopping_is_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let (ws, mut config) = common::shipped_workspace(dir.path(), 20);
    let s = config.stages.iter_mut().find(|s| s.id == "summaries_EN").unwrap();
    s.hyperparams.epochs = 30;
    s.hyperparams.early_stopping_patience = Some(1);
    // A huge learning rate makes validation loss stop improving quickly.
    let backend = ToyBackend { lr_scale: 1e6 };
    let reports = run_stage(&config, "summaries_EN", &backend, &ws, RunOptions::default()).unwrap();
    let n = reports.last().unwrap().epochs.len();
    assert!(n < 30, "ran {n} epochs");
}

#[cfg(unix)]
#[test]
fn external_backend_speaks_the_process_protocol() {
    use std::os::unix::fs::PermissionsExt;
    let dir = tempfile::tempdir().unwrap();
    let (ws, mut config) = common::shipped_workspace(dir.path(), 20);
    config.stages.retain(|s| s.id == "summaries_EN");
    config.stages[0].hyperparams.epochs = 2;
    let script = dir.path().join("trainer.sh");
    std::fs::write(
        &script,
        r#"#!/bin/sh
cmd=$1; shift
case $cmd in
  import) while [ $# -gt 0 ]; do [ "$1" = --out ] && echo base > "$2/weights"; shift; done ;;
  train-epoch)
    while [ $# -gt 0 ]; do case $1 in --state) st=$2;; --epoch) ep=$2;; esac; shift; done
    echo "$ep" >> "$st/epochs"
    echo "progress line"
    echo "{\"epoch\":$ep,\"train_loss\":1.5,\"validation_loss\":2.5}" ;;
  export)
    while [ $# -gt 0 ]; do case $1 in --state) st=$2;; --out) out=$2;; esac; shift; done
    cp "$st/epochs" "$out/weights" ;;
  *) echo "unknown $cmd" >&2; exit 2 ;;
esac
"#,
    )
    .unwrap();
    std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
    let backend = ExternalBackend::new(vec![script.to_string_lossy().into_owned()]);
    let reports = run_stage(&config, "summaries_EN", &backend, &ws, RunOptions::default()).unwrap();
    let last = reports.last().unwrap();
    assert_eq!(last.epochs.len(), 2);
    assert_eq!(last.epochs[1].validation_loss, Some(2.5));
    let art = ws.root().join(&last.artifact);
    assert_eq!(std::fs::read_to_string(art.join("weights")).unwrap(), "1\n2\n");
    assert_eq!(read_manifest(&art).unwrap().kind, ArtifactKind::External);

    let failing = ExternalBackend::new(vec!["/bin/false".into()]);
    config.stages[0].hyperparams.epochs = 3;
    let err = run_stage(&config, "summaries_EN", &failing, &ws, RunOptions::default()).unwrap_err();
    assert_eq!(err.class(), "BackendFailure");
}

#[test]
fn language_sets_in_config_parse() {
    let config = common::shipped_config();
    let mixed = config.stage(FINAL).unwrap();
    assert_eq!(mixed.dataset.language.languages(), [Language::English, Language::Portuguese, Language::German]);
}
