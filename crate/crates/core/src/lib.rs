//! Multilingual radiology report summarization toolkit.
//!
//! The crate covers the whole pipeline around a seq2seq summarizer: report
//! parsing and corpus engineering ([`corpus`]), translation-based
//! augmentation ([`translate`]), staged fine-tuning orchestration
//! ([`pipeline`]), MNTP-bounded generation and a chat-model baseline
//! ([`summarize`]), ROUGE scoring ([`rouge`]) and the blind rating service
//! ([`human_eval`]).
//!
//! Numeric code is generic over [`num::Scalar`]; the aliases below fix the
//! scalar types used by the command-line tool.

pub mod corpus;
pub mod human_eval;
pub mod language;
pub mod model;
pub mod num;
pub mod pipeline;
pub mod predictions;
pub mod rng;
pub mod rouge;
pub mod summarize;
pub mod translate;
pub mod workspace;

pub use corpus::{Corpus, CorpusDescriptor, CorpusError, Report, Split, SplitSpec};
pub use language::{Language, LanguageSet};

/// Double-precision ROUGE score, used for reporting.
pub type RougeScore = rouge::RougeScore<f64>;
/// Single-precision ROUGE score.
pub type RougeScore32 = rouge::RougeScore<f32>;
/// All four ROUGE variants for one summary pair.
pub type RougeSet = rouge::RougeSet<f64>;

/// Toy seq2seq trained by the in-process backend.
pub type ToyModel = model::ToySeq2Seq<f32>;
