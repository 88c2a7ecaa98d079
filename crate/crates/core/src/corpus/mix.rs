use std::collections::HashSet;

use super::{split_corpus, Corpus, CorpusDescriptor, CorpusError, Report, SplitSpec};
use crate::language::LanguageSet;
use crate::rng;

/// Builds a language-balanced corpus: every language contributes the same
/// number of reports (the smallest corpus size unless `per_language_cap` is
/// given) and the same split counts.
///
/// Report ids are namespaced as `<language code>:<original id>` so corpora
/// with overlapping id schemes can be combined.
pub fn mix_multilingual(
    corpora: &[Corpus],
    per_language_cap: Option<usize>,
    spec: &SplitSpec,
    seed: u64,
) -> Result<Corpus, CorpusError> {
    if corpora.len() < 2 {
        return Err(CorpusError::InvalidMix(format!("got {} corpus", corpora.len())));
    }
    let mut languages = Vec::with_capacity(corpora.len());
    let mut seen = HashSet::new();
    for c in corpora {
        let lang = c.descriptor().language.as_single().ok_or_else(|| {
            CorpusError::InvalidMix(format!("corpus {} is not monolingual", c.descriptor()))
        })?;
        if !seen.insert(lang) {
            return Err(CorpusError::InvalidMix(format!("language {lang} appears twice")));
        }
        languages.push(lang);
    }

    let smallest = corpora.iter().map(Corpus::len).min().unwrap_or(0);
    let cap = match per_language_cap {
        Some(cap) if cap > smallest => return Err(CorpusError::CapTooLarge { cap, smallest }),
        Some(cap) => cap,
        None => smallest,
    };
    if cap == 0 {
        return Err(CorpusError::EmptyCorpus);
    }

    let mut entries = Vec::with_capacity(cap * corpora.len());
    for (corpus, lang) in corpora.iter().zip(&languages) {
        let mut sample_rng = rng::derived(seed, &format!("mix/{lang}"));
        let mut picked = rng::permutation(corpus.len(), &mut sample_rng);
        picked.truncate(cap);
        // Keep the source order among the sampled reports.
        picked.sort_unstable();
        let reports: Vec<Report> = picked
            .into_iter()
            .map(|i| {
                let mut r = corpus.reports()[i].clone();
                r.id = format!("{}:{}", lang.code(), r.id);
                r
            })
            .collect();
        let sample = Corpus::new(corpus.descriptor().clone(), reports)?;
        entries.extend(split_corpus(&sample, spec)?.into_entries());
    }

    let mut names: Vec<&str> = Vec::new();
    for c in corpora {
        if !names.contains(&c.descriptor().name.as_str()) {
            names.push(&c.descriptor().name);
        }
    }
    let descriptor = CorpusDescriptor {
        name: names.join("+"),
        language: LanguageSet::from_iter_dedup(languages),
    };
    Corpus::with_splits(descriptor, entries)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::sized;
    use super::super::{Split, SplitCounts};
    use super::*;
    use crate::language::Language;

    #[test]
    fn cap_equals_min_size() {
        let a = sized("a", Language::English, 10);
        let b = sized("b", Language::German, 10);
        let out = mix_multilingual(&[a, b], Some(10), &SplitSpec::counts(8, 1, 1, 0), 0).unwrap();
        assert_eq!(out.len(), 20);
        assert_eq!(out.descriptor().name, "a+b");
        assert_eq!(out.descriptor().language.to_string(), "en+de");
    }

    #[test]
    fn cap_too_large() {
        let a = sized("a", Language::English, 30);
        let b = sized("b", Language::Portuguese, 20);
        let err = mix_multilingual(&[a, b], Some(21), &SplitSpec::counts(21, 0, 0, 0), 0).unwrap_err();
        assert!(matches!(err, CorpusError::CapTooLarge { cap: 21, smallest: 20 }));
    }

    #[test]
    fn duplicate_language_rejected() {
        let a = sized("a", Language::English, 5);
        let b = sized("b", Language::English, 5);
        assert!(matches!(
            mix_multilingual(&[a, b], None, &SplitSpec::counts(5, 0, 0, 0), 0),
            Err(CorpusError::InvalidMix(_))
        ));
    }

    #[test]
    fn single_corpus_rejected() {
        let a = sized("a", Language::English, 5);
        assert!(mix_multilingual(&[a], None, &SplitSpec::counts(5, 0, 0, 0), 0).is_err());
    }

    #[test]
    fn per_language_split_counts() {
        let a = sized("a", Language::English, 40);
        let b = sized("b", Language::Portuguese, 12);
        let c = sized("c", Language::German, 25);
        let out = mix_multilingual(&[a, b, c], None, &SplitSpec::counts(8, 2, 2, 9), 1).unwrap();
        for lang in Language::ALL {
            let mut counts = SplitCounts::default();
            for (r, s) in out.entries().filter(|(r, _)| r.language == lang) {
                assert!(r.id.starts_with(lang.code()));
                match s {
                    Split::Train => counts.train += 1,
                    Split::Validation => counts.validation += 1,
                    Split::Test => counts.test += 1,
                    Split::Unassigned => counts.unassigned += 1,
                }
            }
            assert_eq!(counts, SplitCounts::new(8, 2, 2));
        }
    }
}
