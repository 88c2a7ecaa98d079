use std::collections::BTreeMap;
use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{normalize_whitespace, CorpusError, Report};
use crate::language::Language;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Section {
    Background,
    Findings,
    Impression,
    /// Recognised header whose body is dropped (comparison, technique, ...).
    /// It still terminates the preceding section.
    Other,
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Section::Background => "BACKGROUND",
            Section::Findings => "FINDINGS",
            Section::Impression => "IMPRESSION",
            Section::Other => "OTHER",
        })
    }
}

/// Per-language section header patterns. Patterns are regex fragments matched
/// case-insensitively at the start of a line and followed by a colon.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerTable {
    #[serde(flatten)]
    languages: BTreeMap<Language, BTreeMap<Section, Vec<String>>>,
}

impl Default for MarkerTable {
    fn default() -> Self {
        fn set(entries: &[(Section, &[&str])]) -> BTreeMap<Section, Vec<String>> {
            entries
                .iter()
                .map(|(s, pats)| (*s, pats.iter().map(|p| p.to_string()).collect()))
                .collect()
        }
        let mut languages = BTreeMap::new();
        languages.insert(
            Language::English,
            set(&[
                (
                    Section::Background,
                    &[
                        "CLINICAL HISTORY",
                        "HISTORY",
                        "INDICATIONS?",
                        "BACKGROUND",
                        "REASON FOR (?:EXAM|EXAMINATION|STUDY)",
                    ],
                ),
                (Section::Findings, &["FINDINGS?"]),
                (Section::Impression, &["IMPRESSIONS?", "CONCLUSIONS?"]),
                (
                    Section::Other,
                    &["COMPARISONS?", "TECHNIQUE", "EXAMINATION", "EXAM", "NOTIFICATION", "RECOMMENDATIONS?"],
                ),
            ]),
        );
        languages.insert(
            Language::Portuguese,
            set(&[
                (
                    Section::Background,
                    &["HIST[ÓO]RIA CL[ÍI]NICA", "HIST[ÓO]RIA", "INDICA[ÇC][ÃA]O", "ANTECEDENTES"],
                ),
                (Section::Findings, &["ACHADOS", "RESULTADOS"]),
                (Section::Impression, &["IMPRESS[ÃA]O", "CONCLUS[ÃA]O"]),
                (Section::Other, &["COMPARA[ÇC][ÃA]O", "T[ÉE]CNICA", "EXAME"]),
            ]),
        );
        languages.insert(
            Language::German,
            set(&[
                (
                    Section::Background,
                    &["KLINISCHE ANGABEN", "ANAMNESE", "INDIKATION", "FRAGESTELLUNG"],
                ),
                (Section::Findings, &["BEFUNDE?"]),
                (Section::Impression, &["BEURTEILUNG", "ZUSAMMENFASSUNG", "EINDRUCK"]),
                (Section::Other, &["VERGLEICH", "VORAUFNAHMEN?", "TECHNIK", "UNTERSUCHUNG"]),
            ]),
        );
        MarkerTable { languages }
    }
}

impl MarkerTable {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn patterns(&self, language: Language, section: Section) -> &[String] {
        self.languages
            .get(&language)
            .and_then(|m| m.get(&section))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    fn header_regex(&self, language: Language) -> Result<Regex, regex::Error> {
        let groups: Vec<String> = [Section::Background, Section::Findings, Section::Impression, Section::Other]
            .iter()
            .filter_map(|&section| {
                let pats = self.patterns(language, section);
                (!pats.is_empty()).then(|| format!("(?P<{}>{})", group_name(section), pats.join("|")))
            })
            .collect();
        Regex::new(&format!(r"(?im)^[ \t]*(?:{})[ \t]*:", groups.join("|")))
    }
}

fn group_name(section: Section) -> &'static str {
    match section {
        Section::Background => "background",
        Section::Findings => "findings",
        Section::Impression => "impression",
        Section::Other => "other",
    }
}

/// Splits a semi-structured report into sections. Each body runs from the end
/// of its header to the start of the next recognised header (or the end of
/// the document) and is whitespace-normalized. The first occurrence of a
/// section wins.
pub fn parse_report(
    id: &str,
    source: &str,
    raw: &str,
    language: Language,
    markers: &MarkerTable,
) -> Result<Report, CorpusError> {
    if raw.trim().is_empty() {
        return Err(CorpusError::EmptyReport);
    }
    let re = markers.header_regex(language).map_err(|e| CorpusError::SchemaError {
        line: 0,
        message: format!("invalid marker pattern: {e}"),
    })?;

    let mut headers: Vec<(Section, usize, usize)> = Vec::new();
    for caps in re.captures_iter(raw) {
        let whole = caps.get(0).expect("match has group 0");
        let section = [Section::Background, Section::Findings, Section::Impression, Section::Other]
            .into_iter()
            .find(|s| caps.name(group_name(*s)).is_some())
            .expect("one alternative matched");
        headers.push((section, whole.start(), whole.end()));
    }

    let mut bodies: BTreeMap<Section, String> = BTreeMap::new();
    for (i, &(section, _, body_start)) in headers.iter().enumerate() {
        let body_end = headers.get(i + 1).map_or(raw.len(), |h| h.1);
        let body = normalize_whitespace(&raw[body_start..body_end]);
        if !body.is_empty() {
            bodies.entry(section).or_insert(body);
        }
    }

    let findings = bodies
        .remove(&Section::Findings)
        .ok_or(CorpusError::MissingSection(Section::Findings))?;
    let impression = bodies
        .remove(&Section::Impression)
        .ok_or(CorpusError::MissingSection(Section::Impression))?;
    Ok(Report {
        id: id.to_string(),
        language,
        background: bodies.remove(&Section::Background),
        findings,
        impression,
        source: source.to_string(),
    })
}
