//! Word/punctuation tokenizer of the toy checkpoints. Generation caps
//! (max new tokens) are measured in these tokens.

use std::sync::OnceLock;

use regex::Regex;

fn word_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[\p{L}\p{N}]+|[^\p{L}\p{N}\s]").expect("static regex"))
}

pub fn encode(text: &str) -> Vec<String> {
    word_regex().find_iter(text).map(|m| m.as_str().to_string()).collect()
}

/// Joins tokens, attaching closing punctuation to the preceding word.
/// `encode(&decode(t)) == t` for any token list produced by `encode`.
pub fn decode<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        let t = t.as_ref();
        let attach = matches!(t, "." | "," | ";" | ":" | "!" | "?" | ")" | "%");
        if i > 0 && !attach && !out.ends_with('(') {
            out.push(' ');
        }
        out.push_str(t);
    }
    out
}

pub fn count(text: &str) -> usize {
    word_regex().find_iter(text).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let text = "Subtle opacity (upper lungs), 3.5 cm. No edema!";
        let toks = encode(text);
        assert_eq!(toks[..4], ["Subtle", "opacity", "(", "upper"]);
        assert_eq!(encode(&decode(&toks)), toks);
        assert_eq!(count(text), toks.len());
    }
}
