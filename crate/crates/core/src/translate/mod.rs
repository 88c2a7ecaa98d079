//! Translation-based corpus augmentation.
//!
//! [`translate_corpus`] maps selected report fields through a [`Translator`]
//! while keeping ids and split assignments. Completed reports are appended
//! to a checkpoint file one record at a time, so interrupted jobs resume
//! where they stopped.

mod backends;

use std::collections::HashMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::mpsc;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

pub use backends::{ExternalService, FineTunedModel, StaticTable};

use crate::corpus::{Corpus, CorpusDescriptor, Report, Split};
use crate::language::Language;
use crate::rouge::split_sentences;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Background,
    Findings,
    Impression,
}

impl FromStr for Field {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "background" => Ok(Field::Background),
            "findings" => Ok(Field::Findings),
            "impression" => Ok(Field::Impression),
            other => Err(format!("unknown field `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    ExternalService,
    FineTunedModel,
    StaticTable,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::ExternalService => "external",
            BackendKind::FineTunedModel => "model",
            BackendKind::StaticTable => "table",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TranslateError {
    #[error("translation backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend cannot translate {from} -> {to}: {detail}")]
    UnsupportedPair { from: Language, to: Language, detail: String },
    #[error("source and target language are both {0}")]
    SameLanguage(Language),
    #[error("no fields selected for translation")]
    NoFields,
    #[error("corpus {found} is not in the job's source language {expected}")]
    LanguageMismatch { expected: Language, found: String },
    #[error("{} report(s) failed ({} persisted): {}", failures.len(), persisted, describe(failures))]
    Reports { failures: Vec<(String, TranslateError)>, persisted: usize },
    #[error("checkpoint {path}: line {line}: {message}")]
    Checkpoint { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn describe(failures: &[(String, TranslateError)]) -> String {
    failures.iter().map(|(id, e)| format!("{id}: {e}")).collect::<Vec<_>>().join("; ")
}

impl TranslateError {
    pub fn class(&self) -> &'static str {
        match self {
            TranslateError::BackendUnavailable(_) => "BackendUnavailable",
            TranslateError::UnsupportedPair { .. } => "UnsupportedPair",
            TranslateError::SameLanguage(_) => "SameLanguage",
            TranslateError::NoFields => "NoFields",
            TranslateError::LanguageMismatch { .. } => "LanguageMismatch",
            TranslateError::Reports { failures, .. } => failures.first().map_or("TranslationFailed", |f| f.1.class()),
            TranslateError::Checkpoint { .. } => "SchemaError",
            TranslateError::Io(_) => "IoError",
        }
    }
}

/// Translates one piece of text. Implementations may be called from
/// several threads at once.
pub trait Translator: Send + Sync {
    fn kind(&self) -> BackendKind;
    /// Longest input accepted in one call, in characters.
    fn max_chars(&self) -> Option<usize> {
        None
    }
    fn translate_chunk(&self, text: &str, from: Language, to: Language) -> Result<String, TranslateError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationJob {
    pub source_corpus: CorpusDescriptor,
    pub source_language: Language,
    pub target_language: Language,
    pub backend: BackendKind,
    pub fields: Vec<Field>,
}

impl TranslationJob {
    pub fn new(
        source_corpus: CorpusDescriptor,
        source_language: Language,
        target_language: Language,
        backend: BackendKind,
        fields: Vec<Field>,
    ) -> Result<Self, TranslateError> {
        if source_language == target_language {
            return Err(TranslateError::SameLanguage(source_language));
        }
        if fields.is_empty() {
            return Err(TranslateError::NoFields);
        }
        Ok(TranslationJob { source_corpus, source_language, target_language, backend, fields })
    }
}

/// Findings and impression, the fields the augmentation path translates.
pub fn default_fields() -> Vec<Field> {
    vec![Field::Findings, Field::Impression]
}

/// Groups sentences into chunks of at most `limit` characters. A single
/// sentence longer than the limit becomes its own chunk.
fn chunk_sentences(text: &str, language: Language, limit: usize) -> Vec<String> {
    let mut chunks = Vec::new();
    let mut cur = String::new();
    for s in split_sentences(text, language) {
        if !cur.is_empty() && cur.chars().count() + 1 + s.chars().count() > limit {
            chunks.push(std::mem::take(&mut cur));
        }
        if !cur.is_empty() {
            cur.push(' ');
        }
        cur.push_str(&s);
    }
    if !cur.is_empty() {
        chunks.push(cur);
    }
    chunks
}

pub fn translate_text(
    text: &str,
    from: Language,
    to: Language,
    backend: &dyn Translator,
) -> Result<String, TranslateError> {
    if text.trim().is_empty() {
        return Ok(String::new());
    }
    let chunks = match backend.max_chars() {
        Some(limit) if text.chars().count() > limit => chunk_sentences(text, from, limit),
        _ => vec![text.to_string()],
    };
    let mut out = Vec::with_capacity(chunks.len());
    for c in &chunks {
        let t = backend.translate_chunk(c, from, to)?;
        if t.trim().is_empty() {
            return Err(TranslateError::BackendUnavailable(format!("{} backend returned an empty translation", backend.kind())));
        }
        out.push(t.trim().to_string());
    }
    Ok(out.join(" "))
}

#[derive(Debug, Clone)]
pub struct CorpusOptions {
    /// Concurrent backend requests.
    pub workers: usize,
    /// Append-only store of completed reports.
    pub checkpoint: Option<PathBuf>,
    /// Reuse completed reports from `checkpoint` instead of starting over.
    pub resume: bool,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        CorpusOptions { workers: 4, checkpoint: None, resume: false }
    }
}

fn translate_report(report: &Report, job: &TranslationJob, backend: &dyn Translator) -> Result<Report, TranslateError> {
    let (from, to) = (job.source_language, job.target_language);
    let mut out = report.clone();
    out.language = to;
    for field in &job.fields {
        match field {
            Field::Background => {
                if let Some(b) = &report.background {
                    out.background = Some(translate_text(b, from, to, backend)?);
                }
            }
            Field::Findings => out.findings = translate_text(&report.findings, from, to, backend)?,
            Field::Impression => out.impression = translate_text(&report.impression, from, to, backend)?,
        }
    }
    Ok(out)
}

fn read_checkpoint(path: &Path) -> Result<HashMap<String, Report>, TranslateError> {
    let mut done = HashMap::new();
    if !path.exists() {
        return Ok(done);
    }
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Report>(&line) {
            Ok(r) => {
                done.insert(r.id.clone(), r);
            }
            // A torn final line from an interrupted write is dropped.
            Err(e) if e.is_eof() => break,
            Err(e) => {
                return Err(TranslateError::Checkpoint { path: path.into(), line: i + 1, message: e.to_string() })
            }
        }
    }
    Ok(done)
}

/// Translates `job.fields` of every report. On failure, every report that
/// did translate is already in the checkpoint and the error lists the ids
/// that did not.
pub fn translate_corpus(
    corpus: &Corpus,
    job: &TranslationJob,
    backend: &dyn Translator,
    opts: &CorpusOptions,
) -> Result<Corpus, TranslateError> {
    if corpus.descriptor().language.as_single() != Some(job.source_language) {
        return Err(TranslateError::LanguageMismatch {
            expected: job.source_language,
            found: corpus.descriptor().to_string(),
        });
    }
    let mut done = match (&opts.checkpoint, opts.resume) {
        (Some(path), true) => read_checkpoint(path)?,
        _ => HashMap::new(),
    };
    done.retain(|id, r| corpus.get(id).is_some() && r.language == job.target_language);
    let mut store = match &opts.checkpoint {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            let mut f = OpenOptions::new().create(true).write(true).truncate(true).open(path)?;
            // Rewrite what is kept so the store never holds stale lines.
            for r in corpus.reports().iter().filter_map(|r| done.get(&r.id)) {
                writeln!(f, "{}", serde_json::to_string(r).expect("report serializes"))?;
            }
            f.flush()?;
            Some(f)
        }
        None => None,
    };

    let pending: Vec<&Report> = corpus.reports().iter().filter(|r| !done.contains_key(&r.id)).collect();
    let next = AtomicUsize::new(0);
    let mut failures = Vec::new();
    let mut write_err = None;
    std::thread::scope(|s| {
        let (tx, rx) = mpsc::channel();
        for _ in 0..opts.workers.max(1).min(pending.len().max(1)) {
            let tx = tx.clone();
            let (pending, next) = (&pending, &next);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(report) = pending.get(i) else { break };
                if tx.send((report.id.clone(), translate_report(report, job, backend))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        // Single writer: this thread owns the checkpoint file.
        for (id, result) in rx {
            match result {
                Ok(r) => {
                    if let (Some(f), None) = (store.as_mut(), write_err.as_ref()) {
                        let line = serde_json::to_string(&r).expect("report serializes");
                        if let Err(e) = writeln!(f, "{line}").and_then(|_| f.flush()) {
                            write_err = Some(e);
                        }
                    }
                    done.insert(id, r);
                }
                Err(e) => {
                    log::warn!("translation of {id} failed: {e}");
                    failures.push((id, e));
                }
            }
        }
    });
    if let Some(e) = write_err {
        return Err(e.into());
    }
    if !failures.is_empty() {
        let order: HashMap<&str, usize> = corpus.reports().iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
        failures.sort_by_key(|(id, _)| order[id.as_str()]);
        return Err(TranslateError::Reports { failures, persisted: done.len() });
    }

    let entries: Vec<(Report, Split)> =
        corpus.entries().map(|(r, s)| (done.remove(&r.id).expect("translated"), s)).collect();
    let descriptor = CorpusDescriptor::new(corpus.descriptor().name.clone(), job.target_language);
    Ok(Corpus::with_splits(descriptor, entries).expect("ids unchanged"))
}

/// One line of a parallel translation dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelPair {
    pub id: String,
    #[serde(default, skip_serializing_if = "is_unassigned")]
    pub split: Split,
    pub source: String,
    pub target: String,
}

fn is_unassigned(s: &Split) -> bool {
    *s == Split::Unassigned
}

/// Pairs each field of `source` reports with the same field of their
/// translations, keeping the source's splits. Ids get a `#field` suffix.
pub fn parallel_pairs(source: &Corpus, translated: &Corpus, fields: &[Field]) -> Vec<ParallelPair> {
    let mut out = Vec::new();
    for (r, split) in source.entries() {
        let Some(t) = translated.get(&r.id) else { continue };
        for f in fields {
            let (s, d) = match f {
                Field::Background => match (&r.background, &t.background) {
                    (Some(a), Some(b)) => (a.as_str(), b.as_str()),
                    _ => continue,
                },
                Field::Findings => (r.findings.as_str(), t.findings.as_str()),
                Field::Impression => (r.impression.as_str(), t.impression.as_str()),
            };
            let tag = serde_json::to_value(f).expect("field serializes");
            out.push(ParallelPair {
                id: format!("{}#{}", r.id, tag.as_str().unwrap_or_default()),
                split,
                source: s.into(),
                target: d.into(),
            });
        }
    }
    out
}

pub fn write_pairs(path: &Path, pairs: &[ParallelPair]) -> std::io::Result<()> {
    let mut text = String::new();
    for p in pairs {
        text.push_str(&serde_json::to_string(p).map_err(std::io::Error::from)?);
        text.push('\n');
    }
    crate::workspace::write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Upper;

    impl Translator for Upper {
        fn kind(&self) -> BackendKind {
            BackendKind::StaticTable
        }
        fn max_chars(&self) -> Option<usize> {
            Some(14)
        }
        fn translate_chunk(&self, text: &str, _: Language, _: Language) -> Result<String, TranslateError> {
            assert!(text.chars().count() <= 14 || !text.trim_end_matches('.').contains('.'), "{text}");
            Ok(format!("[{}]", text.to_uppercase()))
        }
    }

    #[test]
    fn empty_in_empty_out() {
        assert_eq!(translate_text("", Language::English, Language::Portuguese, &Upper).unwrap(), "");
    }

    #[test]
    fn long_text_is_chunked_on_sentences() {
        let out = translate_text("Ab cd. Ef gh. Ij kl.", Language::English, Language::Portuguese, &Upper).unwrap();
        assert_eq!(out, "[AB CD. EF GH.] [IJ KL.]");
    }

    #[test]
    fn job_invariants() {
        let d = CorpusDescriptor::new("X", Language::English);
        let same = TranslationJob::new(d.clone(), Language::English, Language::English, BackendKind::StaticTable, default_fields());
        assert!(matches!(same, Err(TranslateError::SameLanguage(_))));
        let none = TranslationJob::new(d, Language::English, Language::German, BackendKind::StaticTable, vec![]);
        assert!(matches!(none, Err(TranslateError::NoFields)));
    }

    #[test]
    fn field_parsing() {
        let f: Vec<Field> = "findings, impression".split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(f, default_fields());
        assert!("notes".parse::<Field>().is_err());
    }
}
