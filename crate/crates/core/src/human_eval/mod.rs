//! Blind side-by-side rating of generated against reference summaries.
//!
//! A session samples test items, shows each item's two summaries in a
//! seeded random order and records a positional comparison plus 1-5
//! readability (R), factual correctness and completeness (FCC) and overall
//! quality (OQ) scores for the generated summary. Comparisons are
//! de-blinded on the server; rater-facing payloads never say which summary
//! is which.
//!
//! State lives in an append-only event log (`events.jsonl`) and is
//! materialized per session under `sessions/`.

mod http;
mod store;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use http::{router, serve, ApiState};
pub use store::{EvalService, SessionRequest};

use crate::corpus::{Corpus, Split};
use crate::language::Language;
use crate::predictions::Prediction;
use crate::rng;
use crate::summarize::{Checkpoint, GenerationRequest};

pub const DEFAULT_ITEMS: usize = 30;

#[derive(Debug, thiserror::Error)]
pub enum EvalServiceError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("item `{item}` is not part of session `{session}`")]
    UnknownItem { session: String, item: String },
    #[error("{field} must be an integer from 1 to 5, got {value}")]
    ScoreOutOfRange { field: &'static str, value: i64 },
    #[error("requested {requested} items but only {available} are eligible")]
    InsufficientItems { requested: usize, available: usize },
    #[error("session `{0}` has no ratings yet")]
    NoRatings(String),
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error("event log line {line}: {message}")]
    CorruptLog { line: usize, message: String },
    #[error("workspace: {0}")]
    Workspace(#[from] crate::workspace::WorkspaceError),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Predictions(#[from] crate::predictions::PredictionsError),
    #[error(transparent)]
    Summarize(#[from] crate::summarize::SummarizeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EvalServiceError {
    pub fn class(&self) -> &'static str {
        match self {
            EvalServiceError::UnknownSession(_) => "UnknownSession",
            EvalServiceError::UnknownItem { .. } => "UnknownItem",
            EvalServiceError::ScoreOutOfRange { .. } => "ScoreOutOfRange",
            EvalServiceError::InsufficientItems { .. } => "InsufficientItems",
            EvalServiceError::NoRatings(_) => "NoRatings",
            EvalServiceError::BadRequest(_) => "BadRequest",
            EvalServiceError::CorruptLog { .. } => "SchemaError",
            EvalServiceError::Workspace(e) => e.class(),
            EvalServiceError::Corpus(e) => e.class(),
            EvalServiceError::Predictions(_) => "SchemaError",
            EvalServiceError::Summarize(e) => e.class(),
            EvalServiceError::Io(_) => "IoError",
        }
    }
}

/// Which summary is shown first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Blinding {
    GsFirst,
    RsFirst,
}

/// The rater's answer, in screen positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PositionalChoice {
    FirstBetter,
    Equal,
    SecondBetter,
}

/// The answer in terms of generated (GS) and reference (RS) summaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Comparison {
    GsBetter,
    Equal,
    RsBetter,
}

impl Comparison {
    pub fn as_str(self) -> &'static str {
        match self {
            Comparison::GsBetter => "GS_BETTER",
            Comparison::Equal => "EQUAL",
            Comparison::RsBetter => "RS_BETTER",
        }
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PositionalChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_ascii_uppercase())).map_err(|_| format!("unknown choice `{s}`"))
    }
}

pub fn deblind(blinding: Blinding, choice: PositionalChoice) -> Comparison {
    use PositionalChoice::*;
    match (blinding, choice) {
        (_, Equal) => Comparison::Equal,
        (Blinding::GsFirst, FirstBetter) | (Blinding::RsFirst, SecondBetter) => Comparison::GsBetter,
        (Blinding::GsFirst, SecondBetter) | (Blinding::RsFirst, FirstBetter) => Comparison::RsBetter,
    }
}

/// A candidate test item: findings with both summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub item_id: String,
    pub findings: String,
    pub generated: String,
    pub reference: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ItemStatus {
    Pending,
    Rated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSession {
    pub session_id: String,
    pub checkpoint: String,
    pub corpus: String,
    pub language: Language,
    pub seed: u64,
    /// Sampled item ids in presentation order.
    pub items: Vec<String>,
    pub blinding: BTreeMap<String, Blinding>,
    pub status: BTreeMap<String, ItemStatus>,
}

/// A stored, de-blinded rating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub item_id: String,
    pub positional: PositionalChoice,
    pub comparison: Comparison,
    pub readability: u8,
    pub fcc: u8,
    pub overall: u8,
    pub timestamp: DateTime<Utc>,
}

/// What a rater submits for one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingInput {
    pub item_id: String,
    pub comparison: PositionalChoice,
    pub r: i64,
    pub fcc: i64,
    pub oq: i64,
}

impl RatingInput {
    fn scores(&self) -> Result<(u8, u8, u8), EvalServiceError> {
        let check = |field: &'static str, value: i64| {
            if (1..=5).contains(&value) {
                Ok(value as u8)
            } else {
                Err(EvalServiceError::ScoreOutOfRange { field, value })
            }
        };
        Ok((check("r", self.r)?, check("fcc", self.fcc)?, check("oq", self.oq)?))
    }
}

/// Rater-facing view of the next pending item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum NextItem {
    Item {
        item_id: String,
        /// 1-based position in the session.
        position: usize,
        total: usize,
        findings: String,
        summary_first: String,
        summary_second: String,
    },
    Done {
        total: usize,
    },
}

/// Rater-facing acknowledgment of a rating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingAck {
    pub item_id: String,
    pub rated: usize,
    pub total: usize,
    pub replaced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub checkpoint: String,
    pub language: Language,
    pub rated: usize,
    pub total: usize,
    /// Percentage of rated items where the generated summary was at least
    /// as good as the reference.
    pub ge_fraction: f64,
    pub mean_r: f64,
    pub mean_fcc: f64,
    pub mean_oq: f64,
}

impl SessionSummary {
    pub fn table_header() -> &'static str {
        "Model Language GS>=RS(%) R FCC OQ"
    }

    /// `checkpoint language ge r fcc oq`, two decimals each.
    pub fn table_row(&self) -> String {
        format!(
            "{} {} {:.2} {:.2} {:.2} {:.2}",
            self.checkpoint,
            self.language.display_name(),
            self.ge_fraction,
            self.mean_r,
            self.mean_fcc,
            self.mean_oq
        )
    }
}

/// Aggregates the current record of each rated item.
pub fn summarize_ratings(session: &EvalSession, ratings: &[&RatingRecord]) -> Result<SessionSummary, EvalServiceError> {
    if ratings.is_empty() {
        return Err(EvalServiceError::NoRatings(session.session_id.clone()));
    }
    let n = ratings.len() as f64;
    let ge = ratings.iter().filter(|r| r.comparison != Comparison::RsBetter).count() as f64;
    let mean = |f: fn(&RatingRecord) -> u8| ratings.iter().map(|r| f64::from(f(r))).sum::<f64>() / n;
    Ok(SessionSummary {
        session_id: session.session_id.clone(),
        checkpoint: session.checkpoint.clone(),
        language: session.language,
        rated: ratings.len(),
        total: session.items.len(),
        ge_fraction: 100.0 * ge / n,
        mean_r: mean(|r| r.readability),
        mean_fcc: mean(|r| r.fcc),
        mean_oq: mean(|r| r.overall),
    })
}

/// Seeded sample of `n` items (kept in pool order) and their blinding.
pub fn sample_items(pool: &[EvalItem], n: usize, seed: u64) -> Result<(Vec<EvalItem>, Vec<Blinding>), EvalServiceError> {
    if n == 0 {
        return Err(EvalServiceError::BadRequest("n_items must be at least 1".into()));
    }
    if pool.len() < n {
        return Err(EvalServiceError::InsufficientItems { requested: n, available: pool.len() });
    }
    let mut idx = rng::permutation(pool.len(), &mut rng::derived(seed, "eval/sample"));
    idx.truncate(n);
    idx.sort_unstable();
    let mut blind_rng = rng::derived(seed, "eval/blinding");
    let items: Vec<EvalItem> = idx.into_iter().map(|i| pool[i].clone()).collect();
    let blinding = items
        .iter()
        .map(|_| if blind_rng.random_bool(0.5) { Blinding::GsFirst } else { Blinding::RsFirst })
        .collect();
    Ok((items, blinding))
}

/// Test-split reports in `language` that have a prediction, in corpus order.
pub fn pool_from_predictions(corpus: &Corpus, language: Language, predictions: &[Prediction]) -> Vec<EvalItem> {
    let by_id: BTreeMap<&str, &Prediction> = predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    corpus
        .in_split(Split::Test)
        .filter(|r| r.language == language)
        .filter_map(|r| {
            by_id.get(r.id.as_str()).map(|p| EvalItem {
                item_id: r.id.clone(),
                findings: r.findings.clone(),
                generated: p.generated.clone(),
                reference: r.impression.clone(),
            })
        })
        .collect()
}

/// Test-split reports in `language` with no generated summary yet.
pub fn pool_from_corpus(corpus: &Corpus, language: Language) -> Vec<EvalItem> {
    corpus
        .in_split(Split::Test)
        .filter(|r| r.language == language)
        .map(|r| EvalItem {
            item_id: r.id.clone(),
            findings: r.findings.clone(),
            generated: String::new(),
            reference: r.impression.clone(),
        })
        .collect()
}

/// Fills in `generated` for each item.
pub fn generate_for(
    checkpoint: &Checkpoint,
    language: Language,
    items: &mut [EvalItem],
    max_new_tokens: usize,
) -> Result<(), EvalServiceError> {
    let requests: Vec<GenerationRequest> = items
        .iter()
        .map(|it| GenerationRequest::new(it.findings.clone(), language).with_max_new_tokens(max_new_tokens))
        .collect();
    for (item, out) in items.iter_mut().zip(checkpoint.summarize_batch(&requests)) {
        item.generated = out?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deblinding_truth_table() {
        use Comparison::{GsBetter, RsBetter};
        use PositionalChoice::{FirstBetter, SecondBetter};
        let table = [
            (Blinding::GsFirst, FirstBetter, GsBetter),
            (Blinding::GsFirst, PositionalChoice::Equal, Comparison::Equal),
            (Blinding::GsFirst, SecondBetter, RsBetter),
            (Blinding::RsFirst, FirstBetter, RsBetter),
            (Blinding::RsFirst, PositionalChoice::Equal, Comparison::Equal),
            (Blinding::RsFirst, SecondBetter, GsBetter),
        ];
        for (b, c, want) in table {
            assert_eq!(deblind(b, c), want, "{b:?} {c:?}");
        }
    }

    #[test]
    fn score_range() {
        let mut r = RatingInput { item_id: "x".into(), comparison: PositionalChoice::Equal, r: 5, fcc: 1, oq: 3 };
        assert_eq!(r.scores().unwrap(), (5, 1, 3));
        r.r = 6;
        assert!(matches!(r.scores(), Err(EvalServiceError::ScoreOutOfRange { field: "r", value: 6 })));
        r.r = 0;
        assert!(r.scores().is_err());
    }

    #[test]
    fn choice_parses_case_insensitively() {
        assert_eq!("second_better".parse::<PositionalChoice>().unwrap(), PositionalChoice::SecondBetter);
    }
}
