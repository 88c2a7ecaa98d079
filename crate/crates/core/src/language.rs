use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Report language. Serialized with the ISO-639-1 codes used in corpus files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Language {
    #[serde(rename = "en")]
    English,
    #[serde(rename = "pt")]
    Portuguese,
    #[serde(rename = "de")]
    German,
}

impl Language {
    pub const ALL: [Language; 3] = [Language::English, Language::Portuguese, Language::German];

    pub fn code(self) -> &'static str {
        match self {
            Language::English => "en",
            Language::Portuguese => "pt",
            Language::German => "de",
        }
    }

    /// Short tag used in stage identifiers (`rr1000_EN`, `rr1000_GE`, ...).
    pub fn stage_tag(self) -> &'static str {
        match self {
            Language::English => "EN",
            Language::Portuguese => "PT",
            Language::German => "GE",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Language::English => "English",
            Language::Portuguese => "Portuguese",
            Language::German => "German",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unsupported language code `{0}` (expected en, pt or de)")]
pub struct UnknownLanguage(pub String);

impl FromStr for Language {
    type Err = UnknownLanguage;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "en" | "eng" | "english" => Ok(Language::English),
            "pt" | "por" | "portuguese" => Ok(Language::Portuguese),
            "de" | "ger" | "ge" | "deu" | "german" => Ok(Language::German),
            other => Err(UnknownLanguage(other.to_string())),
        }
    }
}

/// Languages covered by a corpus: one for monolingual corpora, several for a
/// mixed corpus. Written as `en` or `en+pt+de`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct LanguageSet(Vec<Language>);

impl LanguageSet {
    pub fn single(language: Language) -> Self {
        LanguageSet(vec![language])
    }

    /// Keeps first-appearance order and drops duplicates.
    pub fn from_iter_dedup(languages: impl IntoIterator<Item = Language>) -> Self {
        let mut out = Vec::new();
        for l in languages {
            if !out.contains(&l) {
                out.push(l);
            }
        }
        LanguageSet(out)
    }

    pub fn as_single(&self) -> Option<Language> {
        match self.0.as_slice() {
            [one] => Some(*one),
            _ => None,
        }
    }

    pub fn contains(&self, language: Language) -> bool {
        self.0.contains(&language)
    }

    pub fn languages(&self) -> &[Language] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Language> for LanguageSet {
    fn from(language: Language) -> Self {
        LanguageSet::single(language)
    }
}

impl fmt::Display for LanguageSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let codes: Vec<&str> = self.0.iter().map(|l| l.code()).collect();
        f.write_str(&codes.join("+"))
    }
}

impl FromStr for LanguageSet {
    type Err = UnknownLanguage;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().is_empty() {
            return Ok(LanguageSet::default());
        }
        let langs = s
            .split(['+', ','])
            .map(str::parse)
            .collect::<Result<Vec<Language>, _>>()?;
        Ok(LanguageSet::from_iter_dedup(langs))
    }
}

impl Serialize for LanguageSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LanguageSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_round_trip() {
        for l in Language::ALL {
            assert_eq!(l.code().parse::<Language>().unwrap(), l);
        }
        assert_eq!("GER".parse::<Language>().unwrap(), Language::German);
        assert!("fr".parse::<Language>().is_err());
    }

    #[test]
    fn language_set_text_form() {
        let set: LanguageSet = "en+pt+de".parse().unwrap();
        assert_eq!(set.languages(), &Language::ALL);
        assert_eq!(set.to_string(), "en+pt+de");
        assert_eq!(set.as_single(), None);
        assert_eq!("pt".parse::<LanguageSet>().unwrap().as_single(), Some(Language::Portuguese));
        let json = serde_json::to_string(&set).unwrap();
        assert_eq!(json, "\"en+pt+de\"");
    }
}
