use crate::language::Language;

/// Case-folded word tokens: maximal runs of Unicode alphanumerics. No
/// stemming for any language; the language argument is accepted so callers
/// stay uniform if per-language rules are added.
pub fn tokenize(text: &str, _language: Language) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Per-language abbreviations whose trailing period does not end a sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Abbreviations {
    words: Vec<String>,
}

impl Abbreviations {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Abbreviations { words: words.into_iter().map(|w| w.as_ref().to_lowercase()).collect() }
    }

    pub fn for_language(language: Language) -> Self {
        match language {
            Language::English => Self::new(["dr.", "mr.", "mrs.", "ms.", "vs.", "e.g.", "i.e.", "approx.", "no.", "fig."]),
            Language::Portuguese => Self::new(["dr.", "dra.", "sr.", "sra.", "p.ex.", "aprox.", "n.", "fig."]),
            Language::German => {
                Self::new(["dr.", "z.b.", "bzw.", "ca.", "ggf.", "u.a.", "v.a.", "z.n.", "evtl.", "vs.", "li.", "re.", "nr."])
            }
        }
    }

    fn contains(&self, word: &str) -> bool {
        let w = word.to_lowercase();
        self.words.iter().any(|a| *a == w)
    }
}

/// Splits on `.`, `!` or `?` followed by whitespace or end of text, unless
/// the word carrying the period is a listed abbreviation. Sentences keep
/// their terminator; empty sentences are dropped.
pub fn split_sentences_with(text: &str, abbreviations: &Abbreviations) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let end = i + c.len_utf8();
        let at_boundary = chars.peek().is_none_or(|(_, next)| next.is_whitespace());
        if !at_boundary {
            continue;
        }
        if c == '.' {
            let word_start = text[..i].rfind(char::is_whitespace).map_or(0, |p| p + 1).max(start);
            if abbreviations.contains(&text[word_start..end]) {
                continue;
            }
        }
        push_trimmed(&mut sentences, &text[start..end]);
        start = end;
    }
    push_trimmed(&mut sentences, &text[start..]);
    sentences
}

pub fn split_sentences(text: &str, language: Language) -> Vec<String> {
    split_sentences_with(text, &Abbreviations::for_language(language))
}

fn push_trimmed(out: &mut Vec<String>, piece: &str) {
    let s = piece.trim();
    // A lone terminator is not a sentence.
    if s.chars().any(char::is_alphanumeric) {
        out.push(s.to_string());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EN: Language = Language::English;

    #[test]
    fn tokens() {
        assert_eq!(tokenize("No acute process.", EN), ["no", "acute", "process"]);
        assert_eq!(tokenize("Baixos volumes pulmonares.", Language::Portuguese), ["baixos", "volumes", "pulmonares"]);
        assert!(tokenize("", EN).is_empty());
        assert_eq!(tokenize("T-spine 3.5 cm", EN), ["t", "spine", "3", "5", "cm"]);
        assert_eq!(tokenize("Größe ÜBER", Language::German), ["größe", "über"]);
    }

    #[test]
    fn sentences() {
        assert_eq!(split_sentences("A b. C d.", EN), ["A b.", "C d."]);
        assert_eq!(split_sentences("No change.", EN), ["No change."]);
        assert_eq!(split_sentences("Dr. Smith agrees.", EN), ["Dr. Smith agrees."]);
        assert_eq!(split_sentences("Is it? Yes! ok", EN), ["Is it?", "Yes!", "ok"]);
        assert_eq!(split_sentences("Measures 3.5 cm. Stable.", EN), ["Measures 3.5 cm.", "Stable."]);
        assert!(split_sentences("  ", EN).is_empty());
        assert!(split_sentences("...", EN).is_empty());
    }

    #[test]
    fn german_abbreviation() {
        assert_eq!(
            split_sentences("Erguss bzw. Infiltrat. Kein Pneumothorax.", Language::German),
            ["Erguss bzw. Infiltrat.", "Kein Pneumothorax."]
        );
    }
}
