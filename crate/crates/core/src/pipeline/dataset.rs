use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde_json::Value;

use super::PipelineError;
use crate::corpus::Split;
use crate::model::Example;

/// Training examples grouped by split. Records without a split are skipped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitExamples {
    pub train: Vec<Example>,
    pub validation: Vec<Example>,
    pub test: Vec<Example>,
}

/// Reads a JSON Lines dataset, mapping `input_field` to the model source and
/// `target_field` to the target.
pub fn load_examples(path: &Path, input_field: &str, target_field: &str) -> Result<SplitExamples, PipelineError> {
    let reader = BufReader::new(File::open(path)?);
    let schema = |line: usize, message: String| PipelineError::DatasetSchema {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut out = SplitExamples::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Value = serde_json::from_str(&line).map_err(|e| schema(i + 1, e.to_string()))?;
        let field = |name: &str| -> Result<String, PipelineError> {
            record
                .get(name)
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or_else(|| schema(i + 1, format!("missing string field `{name}`")))
        };
        let split = match record.get("split").and_then(Value::as_str) {
            Some(s) => s.parse::<Split>().map_err(|e| schema(i + 1, e))?,
            None => Split::Unassigned,
        };
        let bucket = match split {
            Split::Train => &mut out.train,
            Split::Validation => &mut out.validation,
            Split::Test => &mut out.test,
            Split::Unassigned => continue,
        };
        bucket.push(Example { source: field(input_field)?, target: field(target_field)? });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_mapping_and_splits() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("marc.jsonl");
        std::fs::write(
            &p,
            concat!(
                r#"{"review_body":"Great pan, heats evenly.","review_title":"Great pan","split":"train"}"#,
                "\n",
                r#"{"review_body":"Broke fast.","review_title":"Bad","split":"test"}"#,
                "\n",
                r#"{"review_body":"n/a","review_title":"n/a"}"#,
                "\n"
            ),
        )
        .unwrap();
        let ex = load_examples(&p, "review_body", "review_title").unwrap();
        assert_eq!(ex.train.len(), 1);
        assert_eq!(ex.test[0].target, "Bad");
        assert!(ex.validation.is_empty());
        assert!(matches!(load_examples(&p, "findings", "impression"), Err(PipelineError::DatasetSchema { line: 1, .. })));
    }
}
