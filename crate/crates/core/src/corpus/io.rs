//! JSON Lines persistence: one report per line, UTF-8.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusDescriptor, CorpusError, Report, Split};
use crate::language::LanguageSet;

#[derive(Serialize)]
struct RecordOut<'a> {
    #[serde(flatten)]
    report: &'a Report,
    #[serde(skip_serializing_if = "is_unassigned")]
    split: Split,
}

fn is_unassigned(s: &Split) -> bool {
    *s == Split::Unassigned
}

#[derive(Deserialize)]
struct RecordIn {
    #[serde(flatten)]
    report: Report,
    #[serde(default)]
    split: Option<Split>,
}

pub fn write_corpus<W: Write>(corpus: &Corpus, mut out: W) -> Result<(), CorpusError> {
    for (report, split) in corpus.entries() {
        serde_json::to_writer(&mut out, &RecordOut { report, split })
            .map_err(|e| CorpusError::Io(e.into()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    write_corpus(corpus, BufWriter::new(File::create(path)?))
}

/// Reads a corpus. The descriptor is reconstructed from the records: the
/// source names joined by `+` in first-appearance order, and the set of
/// report languages. An empty stream is named by `fallback_name`.
pub fn read_corpus<R: Read>(input: R, fallback_name: &str) -> Result<Corpus, CorpusError> {
    let reader = BufReader::new(input);
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RecordIn = serde_json::from_str(&line).map_err(|e| CorpusError::SchemaError {
            line: i + 1,
            message: e.to_string(),
        })?;
        if rec.report.findings.trim().is_empty() || rec.report.impression.trim().is_empty() {
            return Err(CorpusError::SchemaError {
                line: i + 1,
                message: "findings and impression must be non-empty".into(),
            });
        }
        entries.push((rec.report, rec.split.unwrap_or_default()));
    }

    let mut names: Vec<&str> = Vec::new();
    for (r, _) in &entries {
        if !names.contains(&r.source.as_str()) {
            names.push(&r.source);
        }
    }
    let name = if names.is_empty() { fallback_name.to_string() } else { names.join("+") };
    let language = LanguageSet::from_iter_dedup(entries.iter().map(|(r, _)| r.language));
    Corpus::with_splits(CorpusDescriptor { name, language }, entries)
}

pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let fallback = path.file_stem().and_then(|s| s.to_str()).unwrap_or("corpus").to_string();
    read_corpus(File::open(path)?, &fallback)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::sized;
    use super::super::{split_corpus, SplitSpec};
    use super::*;
    use crate::language::Language;

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let mut c = sized("MIMIC-CXR", Language::English, 12);
        c = split_corpus(&c, &SplitSpec::counts(8, 2, 2, 4)).unwrap();
        save_corpus(&c, &path).unwrap();
        assert_eq!(load_corpus(&path).unwrap(), c);
    }

    #[test]
    fn background_optional_on_disk() {
        let line = r#"{"id":"a","language":"pt","findings":"f","impression":"i","source":"IU X-Ray"}"#;
        let c = read_corpus(line.as_bytes(), "x").unwrap();
        assert_eq!(c.reports()[0].background, None);
        assert_eq!(c.split_of("a"), Split::Unassigned);
        assert_eq!(c.descriptor(), &CorpusDescriptor::new("IU X-Ray", Language::Portuguese));
    }

    #[test]
    fn missing_findings_is_schema_error() {
        let line = r#"{"id":"a","language":"en","impression":"i","source":"s"}"#;
        assert!(matches!(
            read_corpus(line.as_bytes(), "x"),
            Err(CorpusError::SchemaError { line: 1, .. })
        ));
    }

    #[test]
    fn unknown_language_is_schema_error() {
        let line = r#"{"id":"a","language":"fr","findings":"f","impression":"i","source":"s"}"#;
        assert!(matches!(read_corpus(line.as_bytes(), "x"), Err(CorpusError::SchemaError { .. })));
    }

    #[test]
    fn duplicate_id() {
        let text = concat!(
            r#"{"id":"r1","language":"en","findings":"f","impression":"i","source":"s"}"#,
            "\n",
            r#"{"id":"r1","language":"en","findings":"g","impression":"j","source":"s"}"#,
            "\n"
        );
        assert!(matches!(read_corpus(text.as_bytes(), "x"), Err(CorpusError::DuplicateId(id)) if id == "r1"));
    }
}
