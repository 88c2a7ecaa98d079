//! Impression generation under a new-token cap, and the chat-model
//! baseline used for side-by-side comparison.

mod baseline;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use baseline::{
    baseline_summarize, comparison_report, prompt_for, BaselineClient, BaselineRecord, ChatProvider, Completion,
    ComparisonRow, EchoProvider, OpenAiCompatible, ProviderError, PROMPT_TEMPLATE, PROMPT_TEMPLATE_VERSION,
};

use crate::corpus::{Corpus, Split};
use crate::language::Language;
use crate::model::tokenizer;
use crate::pipeline::{load_model, read_manifest, run_command, ArtifactKind, ArtifactManifest, Registry};
use crate::predictions::Prediction;
use crate::workspace::WorkspaceConfig;
use crate::ToyModel;

pub const DEFAULT_MAX_NEW_TOKENS: usize = 1000;

#[derive(Debug, thiserror::Error)]
pub enum SummarizeError {
    #[error("checkpoint `{0}` not found in the registry or on disk")]
    CheckpointNotFound(String),
    #[error("checkpoint `{0}` ({1:?}) cannot generate text")]
    NotGenerative(String, ArtifactKind),
    #[error("findings are empty")]
    EmptyFindings,
    #[error("max_new_tokens must be at least 1")]
    InvalidMaxNewTokens,
    #[error("generation failed: {0}")]
    Generation(String),
}

impl SummarizeError {
    pub fn class(&self) -> &'static str {
        match self {
            SummarizeError::CheckpointNotFound(_) => "CheckpointNotFound",
            SummarizeError::NotGenerative(..) => "NotGenerative",
            SummarizeError::EmptyFindings => "EmptyFindings",
            SummarizeError::InvalidMaxNewTokens => "InvalidMaxNewTokens",
            SummarizeError::Generation(_) => "GenerationError",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub findings: String,
    pub language: Language,
    #[serde(default = "default_mnt")]
    pub max_new_tokens: usize,
}

fn default_mnt() -> usize {
    DEFAULT_MAX_NEW_TOKENS
}

impl GenerationRequest {
    pub fn new(findings: impl Into<String>, language: Language) -> Self {
        GenerationRequest { findings: findings.into(), language, max_new_tokens: DEFAULT_MAX_NEW_TOKENS }
    }

    pub fn with_max_new_tokens(mut self, n: usize) -> Self {
        self.max_new_tokens = n;
        self
    }

    fn validate(&self) -> Result<(), SummarizeError> {
        if self.findings.trim().is_empty() {
            return Err(SummarizeError::EmptyFindings);
        }
        if self.max_new_tokens == 0 {
            return Err(SummarizeError::InvalidMaxNewTokens);
        }
        Ok(())
    }
}

enum Engine {
    Toy(ToyModel),
    External { command: Vec<String>, dir: PathBuf },
}

/// A loaded, immutable checkpoint. Safe to share across threads.
pub struct Checkpoint {
    pub id: String,
    pub manifest: ArtifactManifest,
    engine: Engine,
}

impl Checkpoint {
    /// Loads the artifact registered under `id_or_path`, or the artifact
    /// directory at that path.
    pub fn load(ws: &WorkspaceConfig, id_or_path: &str) -> Result<Self, SummarizeError> {
        let not_found = || SummarizeError::CheckpointNotFound(id_or_path.into());
        let registry = Registry::load(&ws.registry_path()).map_err(|_| not_found())?;
        let dir = match registry.get(id_or_path) {
            Some(rec) => ws.root().join(&rec.path),
            None => {
                let p = Path::new(id_or_path);
                if p.is_absolute() { p.to_path_buf() } else { ws.root().join(p) }
            }
        };
        Self::open(&dir, id_or_path)
    }

    /// Loads the artifact directory `dir` directly.
    pub fn open(dir: &Path, id: &str) -> Result<Self, SummarizeError> {
        let manifest = read_manifest(dir).map_err(|_| SummarizeError::CheckpointNotFound(id.into()))?;
        let engine = match manifest.kind {
            ArtifactKind::Toy => Engine::Toy(load_model(dir).map_err(|e| SummarizeError::Generation(e.to_string()))?),
            ArtifactKind::External if !manifest.command.is_empty() => {
                Engine::External { command: manifest.command.clone(), dir: dir.to_path_buf() }
            }
            kind => return Err(SummarizeError::NotGenerative(id.into(), kind)),
        };
        Ok(Checkpoint { id: id.into(), manifest, engine })
    }

    fn warn_language(&self, language: Language) {
        if let Some(langs) = &self.manifest.language {
            if !langs.contains(language) {
                log::warn!("checkpoint `{}` was fine-tuned on {langs}, not {language}", self.id);
            }
        }
    }

    /// Greedy generation; at most `max_new_tokens` tokens of output.
    pub fn summarize(&self, request: &GenerationRequest) -> Result<String, SummarizeError> {
        Ok(self.summarize_batch(std::slice::from_ref(request)).pop().expect("one result")?)
    }

    /// Order-preserving; a failing item does not stop the others.
    pub fn summarize_batch(&self, requests: &[GenerationRequest]) -> Vec<Result<String, SummarizeError>> {
        let mut results: Vec<Option<Result<String, SummarizeError>>> = requests
            .iter()
            .map(|r| {
                r.validate().err().map(Err).or_else(|| {
                    self.warn_language(r.language);
                    None
                })
            })
            .collect();
        let pending: Vec<usize> = (0..requests.len()).filter(|&i| results[i].is_none()).collect();
        match &self.engine {
            Engine::Toy(model) => {
                let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(pending.len().max(1));
                let chunk = pending.len().div_ceil(workers).max(1);
                let generated: Vec<(usize, String)> = std::thread::scope(|s| {
                    let handles: Vec<_> = pending
                        .chunks(chunk)
                        .map(|ids| {
                            s.spawn(move || {
                                ids.iter()
                                    .map(|&i| {
                                        let r = &requests[i];
                                        (i, tokenizer::decode(&model.generate(&r.findings, r.max_new_tokens)))
                                    })
                                    .collect::<Vec<_>>()
                            })
                        })
                        .collect();
                    handles.into_iter().flat_map(|h| h.join().expect("generation thread")).collect()
                });
                for (i, text) in generated {
                    results[i] = Some(Ok(text));
                }
            }
            Engine::External { command, dir } => {
                for (i, out) in external_generate(command, dir, requests, &pending) {
                    results[i] = Some(out);
                }
            }
        }
        results.into_iter().map(|r| r.expect("every item resolved")).collect()
    }
}

#[derive(Serialize)]
struct ExternalItem<'a> {
    id: String,
    source: &'a str,
    max_new_tokens: usize,
}

#[derive(Deserialize)]
struct ExternalOutput {
    id: String,
    generated: String,
}

fn external_generate(
    command: &[String],
    dir: &Path,
    requests: &[GenerationRequest],
    pending: &[usize],
) -> Vec<(usize, Result<String, SummarizeError>)> {
    if pending.is_empty() {
        return Vec::new();
    }
    let input: String = pending
        .iter()
        .map(|&i| {
            let item = ExternalItem { id: i.to_string(), source: &requests[i].findings, max_new_tokens: requests[i].max_new_tokens };
            serde_json::to_string(&item).expect("serializable") + "\n"
        })
        .collect();
    let cap = pending.iter().map(|&i| requests[i].max_new_tokens).max().unwrap_or(1).to_string();
    let dir_arg = dir.to_string_lossy().into_owned();
    let args = ["generate", "--checkpoint", dir_arg.as_str(), "--max-new-tokens", cap.as_str()];
    let fail = |msg: String| pending.iter().map(|&i| (i, Err(SummarizeError::Generation(msg.clone())))).collect();
    let out = match run_command(command, &args, Some(input.as_bytes())) {
        Ok(out) => out,
        Err(e) => return fail(e.to_string()),
    };
    let mut got = std::collections::HashMap::new();
    for line in out.lines().filter(|l| !l.trim().is_empty()) {
        match serde_json::from_str::<ExternalOutput>(line) {
            Ok(o) => {
                got.insert(o.id, o.generated);
            }
            Err(e) => return fail(format!("unreadable generation output: {e}")),
        }
    }
    pending
        .iter()
        .map(|&i| {
            let r = match got.remove(&i.to_string()) {
                // The program's tokenizer may differ; enforce the cap here too.
                Some(text) => Ok(truncate_tokens(&text, requests[i].max_new_tokens)),
                None => Err(SummarizeError::Generation(format!("no output for item {i}"))),
            };
            (i, r)
        })
        .collect()
}

fn truncate_tokens(text: &str, cap: usize) -> String {
    let tokens = tokenizer::encode(text);
    if tokens.len() <= cap {
        text.to_string()
    } else {
        tokenizer::decode(&tokens[..cap])
    }
}

/// Result of summarizing one split of a corpus.
#[derive(Debug, Default)]
pub struct SplitSummary {
    pub predictions: Vec<Prediction>,
    /// `(report id, error)` for items that failed.
    pub errors: Vec<(String, SummarizeError)>,
}

/// Generates an impression for every report in `split`; references are the
/// reports' impressions.
pub fn summarize_split(checkpoint: &Checkpoint, corpus: &Corpus, split: Split, max_new_tokens: usize) -> SplitSummary {
    let reports: Vec<_> = corpus.in_split(split).collect();
    let requests: Vec<GenerationRequest> = reports
        .iter()
        .map(|r| GenerationRequest { findings: r.findings.clone(), language: r.language, max_new_tokens })
        .collect();
    let mut out = SplitSummary::default();
    for (r, result) in reports.iter().zip(checkpoint.summarize_batch(&requests)) {
        match result {
            Ok(generated) => out.predictions.push(Prediction {
                id: r.id.clone(),
                generated,
                reference: r.impression.clone(),
            }),
            Err(e) => out.errors.push((r.id.clone(), e)),
        }
    }
    out
}
