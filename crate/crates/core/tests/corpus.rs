mod common;

use std::collections::BTreeMap;

use common::oracles;
use proptest::prelude::*;
use radsum_core::corpus::*;
use radsum_core::{Corpus, CorpusDescriptor, Language, Report, Split, SplitSpec};

const IMPRESSIONS: [&str; 8] = [
    "No acute process.",
    "Cardiomegaly.",
    "Small left effusion.",
    "Clear lungs.",
    "Right lower lobe pneumonia.",
    "Stable exam.",
    "Mild edema.",
    "Healed rib fracture.",
];

fn report(i: usize, language: Language, impression: &str) -> Report {
    Report {
        id: format!("r{i}"),
        language,
        background: None,
        findings: format!("finding {i}"),
        impression: impression.into(),
        source: "test".into(),
    }
}

/// Impression indices, with some case and spacing variants of the same text.
fn corpus_from(picks: &[(usize, bool)]) -> Corpus {
    let reports = picks
        .iter()
        .enumerate()
        .map(|(i, &(k, shout))| {
            let text = if shout { format!("  {}  ", IMPRESSIONS[k].to_uppercase()) } else { IMPRESSIONS[k].to_string() };
            report(i, Language::English, &text)
        })
        .collect();
    Corpus::new(CorpusDescriptor::new("random", Language::English), reports).unwrap()
}

fn counts(c: &Corpus) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for r in c.reports() {
        *m.entry(normalize_impression(&r.impression)).or_insert(0) += 1;
    }
    m
}

fn sized(language: Language, n: usize) -> Corpus {
    let reports = (0..n).map(|i| report(i, language, IMPRESSIONS[i % 8])).collect();
    Corpus::new(CorpusDescriptor::new(language.display_name(), language), reports).unwrap()
}

#[test]
fn parse_examples() {
    let m = MarkerTable::default();
    let r = parse_report("1", "s", "HISTORY: cough.\nFINDINGS: Clear lungs.\nIMPRESSION: No acute process.", Language::English, &m)
        .unwrap();
    assert_eq!((r.background.as_deref(), r.findings.as_str(), r.impression.as_str()), (Some("cough."), "Clear lungs.", "No acute process."));
    assert!(matches!(
        parse_report("2", "s", "FINDINGS: Clear.\nIMPRESSION:", Language::English, &m),
        Err(CorpusError::MissingSection(Section::Impression))
    ));
    let r = parse_report("3", "s", "FINDINGS:   a   b \nIMPRESSION: ok", Language::English, &m).unwrap();
    assert_eq!(r.findings, "a b");
}

#[test]
fn balance_examples() {
    let mut picks: Vec<Report> = (0..90).map(|i| report(i, Language::English, &format!("unique {i}"))).collect();
    picks.extend((90..100).map(|i| report(i, Language::English, "X")));
    let c = Corpus::new(CorpusDescriptor::new("x", Language::English), picks).unwrap();
    let b = balance_corpus(&c, 0.02, 1).unwrap();
    assert_eq!(b.len(), 91);
    assert_eq!(counts(&b)["x"], 1);

    let unique: Vec<Report> = (0..60).map(|i| report(i, Language::English, &format!("u{i}"))).collect();
    let c = Corpus::new(CorpusDescriptor::new("x", Language::English), unique).unwrap();
    assert_eq!(balance_corpus(&c, 0.02, 1).unwrap(), c);

    let c = corpus_from(&[(0, false), (0, true)]);
    assert!(matches!(balance_corpus(&c, 0.02, 1), Err(CorpusError::InfeasibleCap { .. })));
}

#[test]
fn mix_examples() {
    let spec = SplitSpec::counts(8, 1, 1, 0);
    let mixed = mix_multilingual(&[sized(Language::English, 10), sized(Language::German, 10)], Some(10), &spec, 1).unwrap();
    assert_eq!(mixed.len(), 20);
    let name = mixed.descriptor().name.clone();
    assert!(name.contains("English") && name.contains("German"), "{name}");
    let err = mix_multilingual(&[sized(Language::English, 10), sized(Language::German, 9)], Some(10), &spec, 1);
    assert!(matches!(err, Err(CorpusError::CapTooLarge { cap: 10, smallest: 9 })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn balance_matches_fixed_point_oracle(
        picks in prop::collection::vec((0usize..8, any::<bool>()), 1..=50),
        cap_pct in 5usize..=60,
        seed in any::<u64>(),
    ) {
        let c = corpus_from(&picks);
        let cap = cap_pct as f64 / 100.0;
        match (balance_corpus(&c, cap, seed), oracles::balance_counts(&counts(&c), cap_pct, 100)) {
            (Ok(b), Some(want)) => {
                prop_assert_eq!(counts(&b), want);
                prop_assert_eq!(balance_corpus(&b, cap, seed).unwrap(), b.clone());
                prop_assert_eq!(balance_corpus(&c, cap, seed).unwrap(), b);
            }
            (Err(CorpusError::InfeasibleCap { .. }), None) => {}
            (got, want) => prop_assert!(false, "got {:?}, oracle {:?}", got.map(|b| counts(&b)), want),
        }
    }

    #[test]
    fn split_is_a_seeded_partition(n in 20usize..300, seed in any::<u64>()) {
        let c = sized(Language::Portuguese, n);
        let spec = SplitSpec::ratios(0.64, 0.16, 0.20, seed).unwrap();
        let s = split_corpus(&c, &spec).unwrap();
        let (t, v, te) = oracles::ratio_counts(n, 0.16, 0.20);
        let got = s.split_counts();
        prop_assert_eq!((got.train, got.validation, got.test), (t, v, te));
        prop_assert_eq!(s.entries().filter(|(_, sp)| *sp == Split::Unassigned).count(), 0);
        prop_assert_eq!(split_corpus(&c, &spec).unwrap(), s.clone());
        let other = split_corpus(&c, &SplitSpec::ratios(0.64, 0.16, 0.20, seed ^ 1).unwrap()).unwrap();
        let assignment = |x: &Corpus| x.entries().map(|(r, sp)| (r.id.clone(), sp)).collect::<Vec<_>>();
        prop_assert_ne!(assignment(&other), assignment(&s));
    }

    #[test]
    fn mix_balances_languages(sizes in prop::collection::vec(12usize..80, 3), seed in any::<u64>()) {
        let corpora: Vec<Corpus> = Language::ALL.iter().zip(&sizes).map(|(&l, &n)| sized(l, n)).collect();
        let min = *sizes.iter().min().unwrap();
        let spec = SplitSpec::counts(min - 4, 2, 2, seed);
        let mixed = mix_multilingual(&corpora, None, &spec, seed).unwrap();
        for l in Language::ALL {
            let of: Vec<Split> = mixed.entries().filter(|(r, _)| r.language == l).map(|(_, s)| s).collect();
            prop_assert_eq!(of.len(), min);
            prop_assert_eq!(of.iter().filter(|s| **s == Split::Test).count(), 2);
            prop_assert_eq!(of.iter().filter(|s| **s == Split::Validation).count(), 2);
        }
    }

    #[test]
    fn parsed_sections_are_never_empty(
        findings in "[ \t]{0,3}[A-Za-z .]{0,20}",
        impression in "[ \t]{0,3}[A-Za-z .]{0,20}",
    ) {
        let raw = format!("FINDINGS: {findings}\nIMPRESSION: {impression}");
        if let Ok(r) = parse_report("x", "s", &raw, Language::English, &MarkerTable::default()) {
            prop_assert!(!r.findings.is_empty() && !r.impression.is_empty());
            prop_assert_eq!(r.findings.trim(), r.findings.as_str());
        }
    }

    #[test]
    fn save_load_round_trip(n in 1usize..40, seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let c = split_corpus(&synthetic_corpus("rt", Language::German, n, seed), &SplitSpec::ratios(0.5, 0.25, 0.25, seed).unwrap()).unwrap();
        let path = dir.path().join("c.jsonl");
        save_corpus(&c, &path).unwrap();
        prop_assert_eq!(load_corpus(&path).unwrap(), c);
    }
}
