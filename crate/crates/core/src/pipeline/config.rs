use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::corpus::CorpusDescriptor;
use crate::language::LanguageSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    AdamW,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    LinearDecayToZero,
}

fn default_lr() -> f64 {
    2e-5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHyperparams {
    #[serde(default)]
    pub optimizer: Optimizer,
    #[serde(default = "default_lr")]
    pub lr_max: f64,
    #[serde(default)]
    pub lr_schedule: LrSchedule,
    /// Always explicit in the config; there is no default.
    pub epochs: usize,
    pub batch_size: usize,
    pub max_new_tokens: usize,
    /// Stop after this many epochs without validation improvement. Off
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stopping_patience: Option<usize>,
}

impl TrainingHyperparams {
    pub fn new(epochs: usize, batch_size: usize, max_new_tokens: usize) -> Self {
        TrainingHyperparams {
            optimizer: Optimizer::AdamW,
            lr_max: default_lr(),
            lr_schedule: LrSchedule::LinearDecayToZero,
            epochs,
            batch_size,
            max_new_tokens,
            early_stopping_patience: None,
        }
    }

    /// `(field, value)` pairs that break the positivity constraints.
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if !(self.lr_max > 0.0 && self.lr_max.is_finite()) {
            out.push(("lr_max", self.lr_max.to_string()));
        }
        if self.epochs < 1 {
            out.push(("epochs", self.epochs.to_string()));
        }
        if self.batch_size < 1 {
            out.push(("batch_size", self.batch_size.to_string()));
        }
        if self.max_new_tokens < 1 {
            out.push(("max_new_tokens", self.max_new_tokens.to_string()));
        }
        if self.early_stopping_patience == Some(0) {
            out.push(("early_stopping_patience", "0".into()));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Summarize,
    Translate,
}

fn default_input() -> String {
    "findings".into()
}

fn default_target() -> String {
    "impression".into()
}

/// One fine-tuning stage: a model identified by purpose and target
/// language(s), initialised from `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub id: String,
    /// Another stage id or a declared external checkpoint.
    pub base: String,
    pub dataset: CorpusDescriptor,
    pub task: Task,
    pub hyperparams: TrainingHyperparams,
    #[serde(default = "default_input")]
    pub input_field: String,
    #[serde(default = "default_target")]
    pub target_field: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// A training dataset file: JSON Lines with a `split` field per record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetDecl {
    pub name: String,
    pub language: LanguageSet,
    pub path: PathBuf,
}

impl DatasetDecl {
    pub fn descriptor(&self) -> CorpusDescriptor {
        CorpusDescriptor { name: self.name.clone(), language: self.language.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default)]
    pub external_checkpoints: Vec<String>,
    #[serde(default)]
    pub corpora: Vec<DatasetDecl>,
    pub stages: Vec<StageConfig>,
    /// Directory that relative dataset paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| PipelineError::ConfigParse(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base)
    }

    pub fn stage(&self, id: &str) -> Option<&StageConfig> {
        self.stages.iter().find(|s| s.id == id)
    }

    pub fn is_external(&self, id: &str) -> bool {
        self.external_checkpoints.iter().any(|e| e == id)
    }

    pub fn dataset(&self, descriptor: &CorpusDescriptor) -> Option<&DatasetDecl> {
        self.corpora.iter().find(|d| d.name == descriptor.name && d.language == descriptor.language)
    }

    pub fn dataset_path(&self, decl: &DatasetDecl) -> PathBuf {
        if decl.path.is_absolute() {
            decl.path.clone()
        } else {
            self.base_dir.join(&decl.path)
        }
    }

    /// Stage ids in an order where every base precedes its dependents.
    pub fn topological_order(&self) -> Result<Vec<String>, PipelineError> {
        let mut order = Vec::new();
        let mut done = HashSet::new();
        for s in &self.stages {
            for id in resolve_checkpoint_chain(self, &s.id)? {
                if done.insert(id.clone()) {
                    order.push(id);
                }
            }
        }
        Ok(order)
    }
}

/// Problems that make a config unrunnable.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum Diagnostic {
    DuplicateStage { stage: String },
    DuplicateDataset { dataset: String },
    UnknownBase { stage: String, base: String },
    CycleDetected { cycle: Vec<String> },
    UnknownDataset { stage: String, dataset: String },
    HyperparamViolation { stage: String, field: String, value: String },
    EmptyField { stage: String, field: String },
}

impl Diagnostic {
    pub fn class(&self) -> &'static str {
        match self {
            Diagnostic::DuplicateStage { .. } => "DuplicateStage",
            Diagnostic::DuplicateDataset { .. } => "DuplicateDataset",
            Diagnostic::UnknownBase { .. } => "UnknownBase",
            Diagnostic::CycleDetected { .. } => "CycleDetected",
            Diagnostic::UnknownDataset { .. } => "UnknownDataset",
            Diagnostic::HyperparamViolation { .. } => "HyperparamViolation",
            Diagnostic::EmptyField { .. } => "EmptyField",
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::DuplicateStage { stage } => write!(f, "{}: stage `{stage}` declared twice", self.class()),
            Diagnostic::DuplicateDataset { dataset } => write!(f, "{}: dataset {dataset} declared twice", self.class()),
            Diagnostic::UnknownBase { stage, base } => {
                write!(f, "{}: stage `{stage}` bases on `{base}`, which is neither a stage nor an external checkpoint", self.class())
            }
            Diagnostic::CycleDetected { cycle } => write!(f, "{}: {}", self.class(), cycle.join(" -> ")),
            Diagnostic::UnknownDataset { stage, dataset } => {
                write!(f, "{}: stage `{stage}` uses undeclared dataset {dataset}", self.class())
            }
            Diagnostic::HyperparamViolation { stage, field, value } => {
                write!(f, "{}: stage `{stage}` has {field} = {value}", self.class())
            }
            Diagnostic::EmptyField { stage, field } => write!(f, "{}: stage `{stage}` has empty {field}", self.class()),
        }
    }
}

/// All problems in `config`; empty exactly when it is runnable.
pub fn validate_config(config: &PipelineConfig) -> Vec<Diagnostic> {
    let mut diags = Vec::new();

    let mut seen = HashSet::new();
    for s in &config.stages {
        if !seen.insert(s.id.as_str()) {
            diags.push(Diagnostic::DuplicateStage { stage: s.id.clone() });
        }
    }
    let mut seen_ds = HashSet::new();
    for d in &config.corpora {
        if !seen_ds.insert((d.name.as_str(), d.language.to_string())) {
            diags.push(Diagnostic::DuplicateDataset { dataset: d.descriptor().to_string() });
        }
    }

    let ids: HashSet<&str> = config.stages.iter().map(|s| s.id.as_str()).collect();
    for s in &config.stages {
        if !ids.contains(s.base.as_str()) && !config.is_external(&s.base) {
            diags.push(Diagnostic::UnknownBase { stage: s.id.clone(), base: s.base.clone() });
        }
        if config.dataset(&s.dataset).is_none() {
            diags.push(Diagnostic::UnknownDataset { stage: s.id.clone(), dataset: s.dataset.to_string() });
        }
        for (field, value) in s.hyperparams.violations() {
            diags.push(Diagnostic::HyperparamViolation { stage: s.id.clone(), field: field.into(), value });
        }
        for (field, value) in [("input_field", &s.input_field), ("target_field", &s.target_field)] {
            if value.trim().is_empty() {
                diags.push(Diagnostic::EmptyField { stage: s.id.clone(), field: field.into() });
            }
        }
    }

    // Report each cycle once, rotated to start at its smallest id.
    let base_of: HashMap<&str, &str> = config.stages.iter().map(|s| (s.id.as_str(), s.base.as_str())).collect();
    let mut cycles: BTreeMap<Vec<String>, ()> = BTreeMap::new();
    for s in &config.stages {
        let mut path: Vec<&str> = vec![s.id.as_str()];
        let mut cur = s.id.as_str();
        while let Some(&next) = base_of.get(cur) {
            if let Some(pos) = path.iter().position(|p| *p == next) {
                let mut cycle: Vec<String> = path[pos..].iter().map(|x| x.to_string()).collect();
                let min = cycle.iter().enumerate().min_by(|a, b| a.1.cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
                cycle.rotate_left(min);
                cycles.insert(cycle, ());
                break;
            }
            path.push(next);
            cur = next;
        }
    }
    for (mut cycle, ()) in cycles {
        cycle.push(cycle[0].clone());
        diags.push(Diagnostic::CycleDetected { cycle });
    }
    diags
}

/// Ancestors of `stage_id` following `base` links, root (external
/// checkpoint) first and `stage_id` last.
pub fn resolve_checkpoint_chain(config: &PipelineConfig, stage_id: &str) -> Result<Vec<String>, PipelineError> {
    let mut chain: Vec<String> = Vec::new();
    let mut cur = config
        .stage(stage_id)
        .ok_or_else(|| PipelineError::UnknownStage(stage_id.to_string()))?;
    loop {
        if chain.contains(&cur.id) {
            let mut cycle: Vec<String> = chain.iter().rev().cloned().collect();
            cycle.push(cur.id.clone());
            return Err(PipelineError::CycleDetected(cycle));
        }
        chain.push(cur.id.clone());
        match config.stage(&cur.base) {
            Some(next) => cur = next,
            None if config.is_external(&cur.base) => {
                chain.push(cur.base.clone());
                break;
            }
            None => {
                return Err(PipelineError::UnknownBase { stage: cur.id.clone(), base: cur.base.clone() });
            }
        }
    }
    chain.reverse();
    Ok(chain)
}
