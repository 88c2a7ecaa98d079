//! Radiology report corpora: section parsing, impression-frequency
//! balancing, seeded train/validation/test splitting and multilingual mixing.
//!
//! A [`Corpus`] is immutable once built. Every transformation returns a new
//! value and is a pure function of its inputs and seed.

mod balance;
mod io;
mod mix;
mod parse;
mod split;
mod synthetic;

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use balance::{balance_corpus, normalize_impression, BalancePlan};
pub use io::{load_corpus, read_corpus, save_corpus, write_corpus};
pub use mix::mix_multilingual;
pub use parse::{parse_report, MarkerTable, Section};
pub use split::{split_corpus, SplitCounts, SplitSpec};
pub use synthetic::{synthetic_corpus, synthetic_raw_reports};

use crate::language::{Language, LanguageSet};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("required section {0} is missing or empty")]
    MissingSection(Section),
    #[error("empty report text")]
    EmptyReport,
    #[error("cap fraction {cap} cannot be met: {distinct} distinct impressions cannot all stay below it")]
    InfeasibleCap { cap: f64, distinct: usize },
    #[error("cap fraction must lie strictly between 0 and 1, got {0}")]
    InvalidCapFraction(f64),
    #[error("explicit split counts sum to {expected_total} but corpus has {actual} reports")]
    CountMismatch { expected_total: usize, actual: usize },
    #[error("invalid split spec: {0}")]
    InvalidSplitSpec(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("per-language cap {cap} exceeds the smallest corpus ({smallest} reports)")]
    CapTooLarge { cap: usize, smallest: usize },
    #[error("multilingual mixing needs at least two corpora with distinct languages: {0}")]
    InvalidMix(String),
    #[error("line {line}: {message}")]
    SchemaError { line: usize, message: String },
    #[error("duplicate report id `{0}`")]
    DuplicateId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CorpusError {
    pub fn class(&self) -> &'static str {
        match self {
            CorpusError::MissingSection(_) => "MissingSection",
            CorpusError::EmptyReport => "EmptyReport",
            CorpusError::InfeasibleCap { .. } => "InfeasibleCap",
            CorpusError::InvalidCapFraction(_) => "InvalidCapFraction",
            CorpusError::CountMismatch { .. } => "CountMismatch",
            CorpusError::InvalidSplitSpec(_) => "InvalidSplitSpec",
            CorpusError::EmptyCorpus => "EmptyCorpus",
            CorpusError::CapTooLarge { .. } => "CapTooLarge",
            CorpusError::InvalidMix(_) => "InvalidMix",
            CorpusError::SchemaError { .. } => "SchemaError",
            CorpusError::DuplicateId(_) => "DuplicateId",
            CorpusError::Io(_) => "IoError",
        }
    }
}

/// One parsed radiology report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub id: String,
    pub language: Language,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<String>,
    pub findings: String,
    pub impression: String,
    pub source: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
    #[default]
    Unassigned,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "validation" | "val" | "valid" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            "unassigned" => Ok(Split::Unassigned),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// Names a corpus by dataset name and language(s).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CorpusDescriptor {
    pub name: String,
    pub language: LanguageSet,
}

impl CorpusDescriptor {
    pub fn new(name: impl Into<String>, language: impl Into<LanguageSet>) -> Self {
        CorpusDescriptor { name: name.into(), language: language.into() }
    }
}

impl fmt::Display for CorpusDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.name, self.language)
    }
}

/// Ordered, id-unique collection of reports with split assignments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    descriptor: CorpusDescriptor,
    reports: Vec<Report>,
    split_of: HashMap<String, Split>,
}

impl Corpus {
    /// Builds a corpus with every report unassigned.
    pub fn new(descriptor: CorpusDescriptor, reports: Vec<Report>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(reports.len());
        for r in &reports {
            if !seen.insert(r.id.as_str()) {
                return Err(CorpusError::DuplicateId(r.id.clone()));
            }
        }
        let split_of = reports.iter().map(|r| (r.id.clone(), Split::Unassigned)).collect();
        Ok(Corpus { descriptor, reports, split_of })
    }

    /// Builds a corpus from `(report, split)` pairs.
    pub fn with_splits(
        descriptor: CorpusDescriptor,
        entries: Vec<(Report, Split)>,
    ) -> Result<Self, CorpusError> {
        let mut split_of = HashMap::with_capacity(entries.len());
        let mut reports = Vec::with_capacity(entries.len());
        for (report, split) in entries {
            if split_of.insert(report.id.clone(), split).is_some() {
                return Err(CorpusError::DuplicateId(report.id));
            }
            reports.push(report);
        }
        Ok(Corpus { descriptor, reports, split_of })
    }

    pub fn descriptor(&self) -> &CorpusDescriptor {
        &self.descriptor
    }

    pub fn reports(&self) -> &[Report] {
        &self.reports
    }

    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Report> {
        self.reports.iter().find(|r| r.id == id)
    }

    pub fn split_of(&self, id: &str) -> Split {
        self.split_of.get(id).copied().unwrap_or_default()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Report, Split)> + '_ {
        self.reports.iter().map(|r| (r, self.split_of(&r.id)))
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &Report> + '_ {
        self.reports.iter().filter(move |r| self.split_of(&r.id) == split)
    }

    pub fn split_counts(&self) -> SplitCounts {
        let mut counts = SplitCounts::default();
        for (_, split) in self.entries() {
            match split {
                Split::Train => counts.train += 1,
                Split::Validation => counts.validation += 1,
                Split::Test => counts.test += 1,
                Split::Unassigned => counts.unassigned += 1,
            }
        }
        counts
    }

    pub fn with_descriptor(mut self, descriptor: CorpusDescriptor) -> Self {
        self.descriptor = descriptor;
        self
    }

    pub(crate) fn into_entries(self) -> Vec<(Report, Split)> {
        let Corpus { reports, mut split_of, .. } = self;
        reports
            .into_iter()
            .map(|r| {
                let s = split_of.remove(&r.id).unwrap_or_default();
                (r, s)
            })
            .collect()
    }
}

/// Collapses whitespace runs to single spaces and trims both ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}
