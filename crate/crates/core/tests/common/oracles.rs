//! Independent reference computations used to check the library.

use std::collections::BTreeMap;

/// Longest common subsequence by enumerating every subsequence of the
/// shorter sequence. Exponential; keep inputs short.
pub fn lcs_exhaustive<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    assert!(short.len() <= 16);
    let is_subsequence = |mask: u32| {
        let mut it = long.iter();
        (0..short.len()).filter(|i| mask >> i & 1 == 1).all(|i| it.any(|x| *x == short[i]))
    };
    (0u32..1 << short.len()).filter(|&m| is_subsequence(m)).map(u32::count_ones).max().unwrap_or(0) as usize
}

/// All index sets of `r` forming a longest common subsequence with `c`.
pub fn lcs_position_sets<T: PartialEq>(r: &[T], c: &[T]) -> Vec<Vec<usize>> {
    assert!(r.len() <= 16);
    let embeds = |idx: &[usize]| {
        let mut it = c.iter();
        idx.iter().all(|&i| it.any(|x| *x == r[i]))
    };
    let mut best: Vec<Vec<usize>> = Vec::new();
    let mut best_len = 0;
    for mask in 0u32..1 << r.len() {
        let idx: Vec<usize> = (0..r.len()).filter(|i| mask >> i & 1 == 1).collect();
        if idx.len() < best_len || !embeds(&idx) {
            continue;
        }
        if idx.len() > best_len {
            best_len = idx.len();
            best.clear();
        }
        best.push(idx);
    }
    best
}

/// Clipped n-gram matches: each candidate n-gram consumes one equal
/// reference n-gram, if any is left.
pub fn ngram_hits<T: PartialEq + Clone>(cand: &[T], reference: &[T], n: usize) -> usize {
    let grams = |s: &[T]| -> Vec<Vec<T>> { if s.len() < n { vec![] } else { s.windows(n).map(|w| w.to_vec()).collect() } };
    let mut pool = grams(reference);
    let mut hits = 0;
    for g in grams(cand) {
        if let Some(i) = pool.iter().position(|p| *p == g) {
            pool.swap_remove(i);
            hits += 1;
        }
    }
    hits
}

/// Surviving per-impression counts for a cap of `num/den`, by trying every
/// uniform per-impression cap and keeping the largest that satisfies the
/// strict share bound in exact integer arithmetic. `None` when no cap works.
pub fn balance_counts(counts: &BTreeMap<String, usize>, num: usize, den: usize) -> Option<BTreeMap<String, usize>> {
    let max = counts.values().copied().max().unwrap_or(0);
    let mut best = None;
    for c in 1..=max {
        let capped: BTreeMap<String, usize> = counts.iter().map(|(k, &v)| (k.clone(), v.min(c))).collect();
        let total: usize = capped.values().sum();
        // count / total < num / den  <=>  count * den < num * total
        if capped.values().all(|&v| v * den < num * total) {
            best = Some(capped);
        }
    }
    best
}

/// `(train, validation, test)` for ratio splits: nearest-integer rounding
/// of validation and test, remainder to train.
pub fn ratio_counts(n: usize, validation: f64, test: f64) -> (usize, usize, usize) {
    let v = (validation * n as f64).round() as usize;
    let t = (test * n as f64).round() as usize;
    (n - v - t, v, t)
}
