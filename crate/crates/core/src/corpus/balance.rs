use std::collections::HashMap;

use rand::seq::SliceRandom;

use super::{normalize_whitespace, Corpus, CorpusError};
use crate::rng;

/// Key used to compare impressions: case-folded, whitespace-normalized.
pub fn normalize_impression(text: &str) -> String {
    normalize_whitespace(&text.to_lowercase())
}

/// `count / total < cap` with a margin, so decimal caps such as 0.1 are
/// not loosened by binary rounding (`0.1 * 30` exceeds 3 in f64).
fn below(count: usize, total: usize, cap: f64) -> bool {
    (count as f64) / (total as f64) < cap - 1e-12
}

/// Outcome of the cap search: the per-impression cap and resulting size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BalancePlan {
    pub per_impression_cap: usize,
    pub total: usize,
}

/// Largest uniform cap `c >= 1` such that, after limiting every impression to
/// `c` occurrences, each impression's share of the new total is strictly
/// below `cap_fraction`.
///
/// Searching downward from the current maximum count means an already
/// balanced multiset maps to itself.
pub fn plan_balance(counts: &[usize], cap_fraction: f64) -> Result<BalancePlan, CorpusError> {
    if !(cap_fraction > 0.0 && cap_fraction < 1.0) {
        return Err(CorpusError::InvalidCapFraction(cap_fraction));
    }
    let max_count = counts.iter().copied().max().unwrap_or(0);
    for cap in (1..=max_count).rev() {
        let total: usize = counts.iter().map(|&n| n.min(cap)).sum();
        let largest = max_count.min(cap);
        if below(largest, total, cap_fraction) {
            return Ok(BalancePlan { per_impression_cap: cap, total });
        }
    }
    Err(CorpusError::InfeasibleCap { cap: cap_fraction, distinct: counts.len() })
}

/// Downsamples over-represented impressions until none reaches
/// `cap_fraction` of the corpus. Survivors keep their order and splits.
pub fn balance_corpus(corpus: &Corpus, cap_fraction: f64, seed: u64) -> Result<Corpus, CorpusError> {
    if corpus.is_empty() {
        if !(cap_fraction > 0.0 && cap_fraction < 1.0) {
            return Err(CorpusError::InvalidCapFraction(cap_fraction));
        }
        return Ok(corpus.clone());
    }

    // Group report indices by impression key, in first-appearance order.
    let mut group_of: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, r) in corpus.reports().iter().enumerate() {
        let key = normalize_impression(&r.impression);
        let g = *group_of.entry(key).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }

    let counts: Vec<usize> = groups.iter().map(Vec::len).collect();
    let plan = plan_balance(&counts, cap_fraction)?;

    let mut rng = rng::derived(seed, "balance");
    let mut keep = vec![false; corpus.len()];
    for group in &mut groups {
        if group.len() > plan.per_impression_cap {
            group.shuffle(&mut rng);
            group.truncate(plan.per_impression_cap);
        }
        for &i in group.iter() {
            keep[i] = true;
        }
    }

    let descriptor = corpus.descriptor().clone();
    let entries = corpus
        .entries()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|((r, s), _)| (r.clone(), s))
        .collect();
    Corpus::with_splits(descriptor, entries)
}
