//! Synthetic semi-structured reports for desk-scale runs and tests.
//!
//! Each report pairs a findings paragraph with the impression it implies.
//! About a third of the reports share the normal impression, so balancing
//! has something to do. The same seed and size give parallel reports across
//! languages.

use rand::Rng;

use super::{parse_report, Corpus, CorpusDescriptor, MarkerTable};
use crate::language::Language;
use crate::rng;

struct Templates {
    headers: [&'static str; 3],
    /// (finding sentence, impression)
    cases: &'static [(&'static str, &'static str)],
    filler: &'static [&'static str],
}

const EN: Templates = Templates {
    headers: ["INDICATION", "FINDINGS", "IMPRESSION"],
    cases: &[
        ("The lungs are clear without focal consolidation.", "No acute cardiopulmonary process."),
        ("There is a small left pleural effusion.", "Small left pleural effusion."),
        ("Patchy opacity in the right lower lobe.", "Right lower lobe pneumonia."),
        ("The cardiac silhouette is enlarged.", "Cardiomegaly."),
        ("Mild interstitial edema is present.", "Mild pulmonary edema."),
        ("A right apical pneumothorax is seen.", "Right pneumothorax."),
    ],
    filler: &[
        "Heart size is normal.",
        "No pneumothorax.",
        "Osseous structures are intact.",
        "Mediastinal contours are unremarkable.",
    ],
};

const PT: Templates = Templates {
    headers: ["INDICAÇÃO", "ACHADOS", "IMPRESSÃO"],
    cases: &[
        ("Os pulmões estão limpos sem consolidação focal.", "Sem processo cardiopulmonar agudo."),
        ("Há um pequeno derrame pleural à esquerda.", "Pequeno derrame pleural à esquerda."),
        ("Opacidade irregular no lobo inferior direito.", "Pneumonia no lobo inferior direito."),
        ("A silhueta cardíaca está aumentada.", "Cardiomegalia."),
        ("Há edema intersticial leve.", "Edema pulmonar leve."),
        ("Observa-se pneumotórax apical à direita.", "Pneumotórax à direita."),
    ],
    filler: &[
        "Coração de tamanho normal.",
        "Sem pneumotórax.",
        "Estruturas ósseas íntegras.",
        "Contornos mediastinais sem alterações.",
    ],
};

const DE: Templates = Templates {
    headers: ["ANAMNESE", "BEFUND", "BEURTEILUNG"],
    cases: &[
        ("Die Lunge ist frei ohne fokale Konsolidierung.", "Kein akuter kardiopulmonaler Befund."),
        ("Kleiner Pleuraerguss links.", "Kleiner Pleuraerguss links."),
        ("Fleckige Verschattung im rechten Unterlappen.", "Pneumonie im rechten Unterlappen."),
        ("Das Herz ist vergrößert.", "Kardiomegalie."),
        ("Geringes interstitielles Ödem.", "Geringe pulmonale Stauung."),
        ("Apikaler Pneumothorax rechts.", "Pneumothorax rechts."),
    ],
    filler: &[
        "Herzgröße normal.",
        "Kein Pneumothorax.",
        "Knöcherne Strukturen intakt.",
        "Mediastinum unauffällig.",
    ],
};

fn templates(language: Language) -> &'static Templates {
    match language {
        Language::English => &EN,
        Language::Portuguese => &PT,
        Language::German => &DE,
    }
}

/// `n` raw reports with section headers, as `(id, text)` pairs.
pub fn synthetic_raw_reports(language: Language, n: usize, seed: u64) -> Vec<(String, String)> {
    let t = templates(language);
    let mut rng = rng::derived(seed, "synthetic");
    (0..n)
        .map(|i| {
            let case = if rng.random_bool(0.35) { 0 } else { rng.random_range(1..t.cases.len()) };
            let (finding, impression) = t.cases[case];
            let mut findings = vec![finding];
            for f in t.filler {
                if rng.random_bool(0.5) {
                    findings.push(f);
                }
            }
            let age = rng.random_range(20..90);
            let raw = format!(
                "{}: {} {age}.\n{}:\n{}\n{}: {}\n",
                t.headers[0],
                match language {
                    Language::English => "Chest radiograph, age",
                    Language::Portuguese => "Radiografia de tórax, idade",
                    Language::German => "Röntgen Thorax, Alter",
                },
                t.headers[1],
                findings.join(" "),
                t.headers[2],
                impression
            );
            (format!("{}-{i:05}", language.code()), raw)
        })
        .collect()
}

/// Parsed corpus of `n` synthetic reports.
pub fn synthetic_corpus(name: &str, language: Language, n: usize, seed: u64) -> Corpus {
    let markers = MarkerTable::default();
    let reports = synthetic_raw_reports(language, n, seed)
        .into_iter()
        .map(|(id, raw)| parse_report(&id, name, &raw, language, &markers).expect("synthetic reports parse"))
        .collect();
    Corpus::new(CorpusDescriptor::new(name, language), reports).expect("unique ids")
}
