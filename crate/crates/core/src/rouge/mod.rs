//! ROUGE-1, ROUGE-2, ROUGE-L and ROUGE-Lsum over case-folded word tokens.
//!
//! Scores are generic over the scalar type; counts are exact integers and
//! only the final ratios are converted.

mod report;
mod tokenize;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use report::{evaluate_model, evaluate_predictions, EvalError, EvalReport};
pub use tokenize::{split_sentences, split_sentences_with, tokenize, Abbreviations};

use crate::language::Language;
use crate::num::{f_measure, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RougeVariant {
    #[serde(rename = "rouge1")]
    R1,
    #[serde(rename = "rouge2")]
    R2,
    #[serde(rename = "rougeL")]
    RL,
    #[serde(rename = "rougeLsum")]
    RLsum,
}

impl RougeVariant {
    pub const ALL: [RougeVariant; 4] = [RougeVariant::R1, RougeVariant::R2, RougeVariant::RL, RougeVariant::RLsum];
}

impl fmt::Display for RougeVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RougeVariant::R1 => "ROUGE-1",
            RougeVariant::R2 => "ROUGE-2",
            RougeVariant::RL => "ROUGE-L",
            RougeVariant::RLsum => "ROUGE-Lsum",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RougeScore<F> {
    pub variant: RougeVariant,
    pub precision: F,
    pub recall: F,
    pub f1: F,
}

impl<F: Scalar> RougeScore<F> {
    pub fn zero(variant: RougeVariant) -> Self {
        RougeScore { variant, precision: F::zero(), recall: F::zero(), f1: F::zero() }
    }

    /// Score from an overlap count against candidate and reference sizes.
    pub fn from_counts(variant: RougeVariant, hits: usize, candidate_len: usize, reference_len: usize) -> Self {
        if hits == 0 || candidate_len == 0 || reference_len == 0 {
            return Self::zero(variant);
        }
        let precision = F::of_usize(hits) / F::of_usize(candidate_len);
        let recall = F::of_usize(hits) / F::of_usize(reference_len);
        RougeScore { variant, precision, recall, f1: f_measure(precision, recall) }
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram overlap on pre-tokenized input.
pub fn rouge_n_tokens<F: Scalar>(candidate: &[String], reference: &[String], n: usize) -> RougeScore<F> {
    let variant = if n == 2 { RougeVariant::R2 } else { RougeVariant::R1 };
    let cand = ngram_counts(candidate, n);
    let refc = ngram_counts(reference, n);
    let hits: usize = cand
        .iter()
        .map(|(gram, &c)| c.min(refc.get(gram).copied().unwrap_or(0)))
        .sum();
    let cand_total = candidate.len().saturating_sub(n - 1);
    let ref_total = reference.len().saturating_sub(n - 1);
    RougeScore::from_counts(variant, hits, cand_total, ref_total)
}

/// ROUGE-N with `n` in {1, 2}.
pub fn rouge_n<F: Scalar>(candidate: &str, reference: &str, n: usize, language: Language) -> RougeScore<F> {
    assert!(n == 1 || n == 2, "rouge_n supports n = 1 or 2, got {n}");
    rouge_n_tokens(&tokenize(candidate, language), &tokenize(reference, language), n)
}

/// DP table of LCS lengths; `table[i][j]` covers `a[..i]`, `b[..j]`.
fn lcs_table(a: &[String], b: &[String]) -> Vec<Vec<usize>> {
    let mut table = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            table[i][j] = if a[i - 1] == b[j - 1] {
                table[i - 1][j - 1] + 1
            } else {
                table[i - 1][j].max(table[i][j - 1])
            };
        }
    }
    table
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    lcs_table(a, b)[a.len()][b.len()]
}

/// Indices into `reference` of one longest common subsequence with
/// `candidate`, recovered by backtracking the DP table.
pub fn lcs_reference_positions(reference: &[String], candidate: &[String]) -> Vec<usize> {
    let table = lcs_table(reference, candidate);
    let (mut i, mut j) = (reference.len(), candidate.len());
    let mut positions = Vec::with_capacity(table[i][j]);
    while i > 0 && j > 0 {
        if reference[i - 1] == candidate[j - 1] {
            positions.push(i - 1);
            i -= 1;
            j -= 1;
        } else if table[i - 1][j] >= table[i][j - 1] {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    positions.reverse();
    positions
}

pub fn rouge_l_tokens<F: Scalar>(candidate: &[String], reference: &[String]) -> RougeScore<F> {
    RougeScore::from_counts(RougeVariant::RL, lcs_len(candidate, reference), candidate.len(), reference.len())
}

pub fn rouge_l<F: Scalar>(candidate: &str, reference: &str, language: Language) -> RougeScore<F> {
    rouge_l_tokens(&tokenize(candidate, language), &tokenize(reference, language))
}

/// Summary-level LCS over tokenized sentences.
///
/// For each reference sentence the LCS positions against every candidate
/// sentence are unioned. Union tokens count as hits only while both the
/// reference and candidate still have unconsumed occurrences of that token,
/// so a token is never credited more often than it appears on either side.
pub fn rouge_lsum_sentences<F: Scalar>(candidate: &[Vec<String>], reference: &[Vec<String>]) -> RougeScore<F> {
    let cand_len: usize = candidate.iter().map(Vec::len).sum();
    let ref_len: usize = reference.iter().map(Vec::len).sum();
    if cand_len == 0 || ref_len == 0 {
        return RougeScore::zero(RougeVariant::RLsum);
    }

    let mut ref_left: HashMap<&str, usize> = HashMap::new();
    for t in reference.iter().flatten() {
        *ref_left.entry(t).or_insert(0) += 1;
    }
    let mut cand_left: HashMap<&str, usize> = HashMap::new();
    for t in candidate.iter().flatten() {
        *cand_left.entry(t).or_insert(0) += 1;
    }

    let mut hits = 0;
    for ref_sentence in reference {
        let mut union: Vec<usize> = candidate
            .iter()
            .flat_map(|c| lcs_reference_positions(ref_sentence, c))
            .collect();
        union.sort_unstable();
        union.dedup();
        for pos in union {
            let token = ref_sentence[pos].as_str();
            let (Some(r), Some(c)) = (ref_left.get_mut(token), cand_left.get_mut(token)) else {
                continue;
            };
            if *r > 0 && *c > 0 {
                *r -= 1;
                *c -= 1;
                hits += 1;
            }
        }
    }
    RougeScore::from_counts(RougeVariant::RLsum, hits, cand_len, ref_len)
}

pub fn rouge_lsum<F: Scalar>(candidate: &str, reference: &str, language: Language) -> RougeScore<F> {
    let sentences = |text: &str| -> Vec<Vec<String>> {
        split_sentences(text, language)
            .iter()
            .map(|s| tokenize(s, language))
            .filter(|t| !t.is_empty())
            .collect()
    };
    rouge_lsum_sentences(&sentences(candidate), &sentences(reference))
}

/// All four variants for one candidate/reference pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RougeSet<F> {
    pub rouge1: RougeScore<F>,
    pub rouge2: RougeScore<F>,
    pub rouge_l: RougeScore<F>,
    pub rouge_lsum: RougeScore<F>,
}

impl<F: Scalar> RougeSet<F> {
    pub fn score(candidate: &str, reference: &str, language: Language) -> Self {
        let cand = tokenize(candidate, language);
        let refr = tokenize(reference, language);
        RougeSet {
            rouge1: rouge_n_tokens(&cand, &refr, 1),
            rouge2: rouge_n_tokens(&cand, &refr, 2),
            rouge_l: rouge_l_tokens(&cand, &refr),
            rouge_lsum: rouge_lsum(candidate, reference, language),
        }
    }

    pub fn get(&self, variant: RougeVariant) -> RougeScore<F> {
        match variant {
            RougeVariant::R1 => self.rouge1,
            RougeVariant::R2 => self.rouge2,
            RougeVariant::RL => self.rouge_l,
            RougeVariant::RLsum => self.rouge_lsum,
        }
    }
}
