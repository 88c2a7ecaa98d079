use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, Split};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub unassigned: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

impl SplitCounts {
    pub fn new(train: usize, validation: usize, test: usize) -> Self {
        SplitCounts { train, validation, test, unassigned: 0 }
    }

    pub fn total(&self) -> usize {
        self.train + self.validation + self.test + self.unassigned
    }
}

/// How to partition a corpus: exact counts or ratios, plus the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitSpec {
    Counts { counts: SplitCounts, seed: u64 },
    Ratios { train: f64, validation: f64, test: f64, seed: u64 },
}

impl SplitSpec {
    pub fn counts(train: usize, validation: usize, test: usize, seed: u64) -> Self {
        SplitSpec::Counts { counts: SplitCounts::new(train, validation, test), seed }
    }

    pub fn ratios(train: f64, validation: f64, test: f64, seed: u64) -> Result<Self, CorpusError> {
        for r in [train, validation, test] {
            if !(0.0..=1.0).contains(&r) || r.is_nan() {
                return Err(CorpusError::InvalidSplitSpec(format!("ratio {r} outside [0, 1]")));
            }
        }
        let sum = train + validation + test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidSplitSpec(format!("ratios sum to {sum}, not 1")));
        }
        Ok(SplitSpec::Ratios { train, validation, test, seed })
    }

    pub fn seed(&self) -> u64 {
        match *self {
            SplitSpec::Counts { seed, .. } | SplitSpec::Ratios { seed, .. } => seed,
        }
    }

    /// Concrete counts for `n` items. Validation and test are rounded to the
    /// nearest integer; train absorbs the residual.
    pub fn resolve(&self, n: usize) -> Result<SplitCounts, CorpusError> {
        match *self {
            SplitSpec::Counts { counts, .. } => {
                if counts.train + counts.validation + counts.test != n {
                    return Err(CorpusError::CountMismatch {
                        expected_total: counts.train + counts.validation + counts.test,
                        actual: n,
                    });
                }
                Ok(SplitCounts::new(counts.train, counts.validation, counts.test))
            }
            SplitSpec::Ratios { validation, test, .. } => {
                let nf = n as f64;
                let mut val = (validation * nf).round() as usize;
                let mut tst = (test * nf).round() as usize;
                // Rounding both up can overshoot on tiny corpora.
                while val + tst > n {
                    if tst >= val && tst > 0 {
                        tst -= 1;
                    } else {
                        val -= 1;
                    }
                }
                Ok(SplitCounts::new(n - val - tst, val, tst))
            }
        }
    }
}

/// Seeded shuffle followed by contiguous assignment train, validation, test.
pub fn split_corpus(corpus: &Corpus, spec: &SplitSpec) -> Result<Corpus, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let counts = spec.resolve(corpus.len())?;
    let order = rng::permutation(corpus.len(), &mut rng::derived(spec.seed(), "split"));
    let mut splits = vec![Split::Unassigned; corpus.len()];
    for (rank, &idx) in order.iter().enumerate() {
        splits[idx] = if rank < counts.train {
            Split::Train
        } else if rank < counts.train + counts.validation {
            Split::Validation
        } else {
            Split::Test
        };
    }
    let entries = corpus
        .reports()
        .iter()
        .cloned()
        .zip(splits)
        .collect();
    Corpus::with_splits(corpus.descriptor().clone(), entries)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::sized;
    use super::*;
    use crate::language::Language;

    #[test]
    fn german_ratio_counts() {
        let spec = SplitSpec::ratios(0.64, 0.16, 0.20, 0).unwrap();
        assert_eq!(spec.resolve(53_385).unwrap(), SplitCounts::new(34_166, 8_542, 10_677));
    }

    #[test]
    fn explicit_counts() {
        let c = sized("pt", Language::Portuguese, 1_991);
        let out = split_corpus(&c, &SplitSpec::counts(1_591, 200, 200, 5)).unwrap();
        assert_eq!(out.split_counts(), SplitCounts::new(1_591, 200, 200));
    }

    #[test]
    fn count_mismatch() {
        let c = sized("x", Language::English, 10);
        let err = split_corpus(&c, &SplitSpec::counts(5, 2, 2, 0)).unwrap_err();
        assert!(matches!(err, CorpusError::CountMismatch { expected_total: 9, actual: 10 }));
    }

    #[test]
    fn degenerate_all_train() {
        let c = sized("x", Language::English, 10);
        let out = split_corpus(&c, &SplitSpec::ratios(1.0, 0.0, 0.0, 0).unwrap()).unwrap();
        assert_eq!(out.split_counts(), SplitCounts::new(10, 0, 0));
    }

    #[test]
    fn empty_corpus_rejected() {
        let c = sized("x", Language::English, 0);
        assert!(matches!(
            split_corpus(&c, &SplitSpec::counts(0, 0, 0, 0)),
            Err(CorpusError::EmptyCorpus)
        ));
    }

    #[test]
    fn ratio_validation() {
        assert!(SplitSpec::ratios(0.5, 0.3, 0.3, 0).is_err());
        assert!(SplitSpec::ratios(1.2, -0.1, -0.1, 0).is_err());
        assert!(SplitSpec::ratios(0.8, 0.1, 0.1, 0).is_ok());
    }

    #[test]
    fn tiny_corpus_rounding_never_overshoots() {
        let spec = SplitSpec::ratios(0.0, 0.5, 0.5, 0).unwrap();
        let counts = spec.resolve(1).unwrap();
        assert_eq!(counts.total(), 1);
    }
}
