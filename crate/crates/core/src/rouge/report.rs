use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RougeSet, RougeVariant};
use crate::language::Language;
use crate::predictions::{read_predictions, Prediction, PredictionsError};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("predictions file holds no records")]
    EmptyPredictions,
    #[error(transparent)]
    Predictions(#[from] PredictionsError),
}

impl EvalError {
    pub fn class(&self) -> &'static str {
        match self {
            EvalError::EmptyPredictions => "EmptyPredictions",
            EvalError::Predictions(PredictionsError::Schema { .. }) => "SchemaError",
            EvalError::Predictions(PredictionsError::Io(_)) => "IoError",
        }
    }
}

/// Mean F1 × 100 per variant, rounded to two decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub checkpoint: String,
    pub corpus: String,
    pub language: Language,
    pub instances: usize,
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    #[serde(rename = "rougeLsum")]
    pub rouge_lsum: f64,
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

impl EvalReport {
    pub fn value(&self, variant: RougeVariant) -> f64 {
        match variant {
            RougeVariant::R1 => self.rouge1,
            RougeVariant::R2 => self.rouge2,
            RougeVariant::RL => self.rouge_l,
            RougeVariant::RLsum => self.rouge_lsum,
        }
    }

    pub fn table_header() -> &'static str {
        "Model ROUGE-1 ROUGE-2 ROUGE-L ROUGE-Lsum"
    }

    /// One row in the layout of the quantitative results table, e.g.
    /// `M_rr-1000_EN,PT,GE 46.11 32.31 43.54 44.93`.
    pub fn table_row(&self) -> String {
        format!(
            "{} {:.2} {:.2} {:.2} {:.2}",
            self.checkpoint, self.rouge1, self.rouge2, self.rouge_l, self.rouge_lsum
        )
    }
}

/// Scores each prediction in parallel shards and averages per variant.
pub fn evaluate_predictions(
    predictions: &[Prediction],
    language: Language,
    checkpoint: &str,
    corpus: &str,
) -> Result<EvalReport, EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::EmptyPredictions);
    }
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(8);
    let chunk = predictions.len().div_ceil(workers);
    let partials: Vec<[f64; 4]> = std::thread::scope(|scope| {
        let handles: Vec<_> = predictions
            .chunks(chunk)
            .map(|shard| {
                scope.spawn(move || {
                    let mut sums = [0.0f64; 4];
                    for p in shard {
                        let set: RougeSet<f64> = RougeSet::score(&p.generated, &p.reference, language);
                        for (slot, v) in sums.iter_mut().zip(RougeVariant::ALL) {
                            *slot += set.get(v).f1;
                        }
                    }
                    sums
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("scoring thread panicked")).collect()
    });
    // Shards are reduced in order so the sum is deterministic.
    let mut sums = [0.0f64; 4];
    for part in partials {
        for (s, p) in sums.iter_mut().zip(part) {
            *s += p;
        }
    }
    let n = predictions.len() as f64;
    let mean = |i: usize| round2(100.0 * sums[i] / n);
    Ok(EvalReport {
        checkpoint: checkpoint.to_string(),
        corpus: corpus.to_string(),
        language,
        instances: predictions.len(),
        rouge1: mean(0),
        rouge2: mean(1),
        rouge_l: mean(2),
        rouge_lsum: mean(3),
    })
}

pub fn evaluate_model(
    predictions_file: &Path,
    language: Language,
    checkpoint: &str,
    corpus: &str,
) -> Result<EvalReport, EvalError> {
    let predictions = read_predictions(predictions_file)?;
    evaluate_predictions(&predictions, language, checkpoint, corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(id: &str, generated: &str, reference: &str) -> Prediction {
        Prediction { id: id.into(), generated: generated.into(), reference: reference.into() }
    }

    #[test]
    fn identical_predictions_score_100() {
        let preds = vec![pred("a", "No acute process.", "No acute process."), pred("b", "Mild edema. Stable.", "Mild edema. Stable.")];
        let r = evaluate_predictions(&preds, Language::English, "m", "c").unwrap();
        for v in RougeVariant::ALL {
            assert_eq!(r.value(v), 100.0);
        }
    }

    #[test]
    fn single_pair_rouge1() {
        let r = evaluate_predictions(&[pred("a", "the cat sat", "the cat ran")], Language::English, "m", "c").unwrap();
        assert_eq!(r.rouge1, 66.67);
        assert_eq!(r.instances, 1);
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(
            evaluate_predictions(&[], Language::English, "m", "c"),
            Err(EvalError::EmptyPredictions)
        ));
    }

    #[test]
    fn table_row_format() {
        let r = EvalReport {
            checkpoint: "M_rr-1000_EN,PT,GE".into(),
            corpus: "mixed".into(),
            language: Language::English,
            instances: 600,
            rouge1: 46.11,
            rouge2: 32.31,
            rouge_l: 43.54,
            rouge_lsum: 44.93,
        };
        assert_eq!(r.table_row(), "M_rr-1000_EN,PT,GE 46.11 32.31 43.54 44.93");
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["rougeLsum"], 44.93);
    }

    #[test]
    fn deterministic_across_runs() {
        let preds: Vec<Prediction> = (0..100)
            .map(|i| pred(&i.to_string(), &format!("w{} x y", i % 7), &format!("x w{} y z", i % 5)))
            .collect();
        let a = evaluate_predictions(&preds, Language::English, "m", "c").unwrap();
        let b = evaluate_predictions(&preds, Language::English, "m", "c").unwrap();
        assert_eq!(a, b);
    }
}
