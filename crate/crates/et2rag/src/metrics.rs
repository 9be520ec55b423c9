//! Evaluation metrics: containment accuracy for QA, corpus BLEU-4 and
//! ROUGE-L for generation, and their configured sum.
//!
//! Containment is token-level: a prediction is correct iff some
//! reference's normalized token sequence occurs contiguously inside
//! the prediction's normalized tokens, so "parisian" does not match
//! "paris". BLEU and ROUGE-L are reported on the [0, 100] scale.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::text;

/// Smoothing floor for zero n-gram precisions.
pub const BLEU_EPSILON: f64 = 1e-9;

/// One prediction with its gold references.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRecord {
    pub query_id: String,
    pub prediction: String,
    pub references: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric_name: String,
    pub corpus_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_item_values: Option<Vec<f64>>,
}

/// Length of the longest common subsequence of two token slices.
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut current = vec![0usize; b.len() + 1];
    for token_a in a {
        for (j, token_b) in b.iter().enumerate() {
            current[j + 1] = if token_a == token_b {
                prev[j] + 1
            } else {
                current[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut current);
    }
    prev[b.len()]
}

/// ROUGE-L F1 of two token slices, in [0, 1]. Degenerate (either side
/// empty, or no overlap) yields 0.
pub fn rouge_l_f1(prediction: &[String], reference: &[String]) -> f64 {
    if prediction.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(prediction, reference) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let precision = lcs / prediction.len() as f64;
    let recall = lcs / reference.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

fn contains_contiguous(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty()
        && haystack
            .windows(needle.len())
            .any(|window| window == needle)
}

fn containment_correct(record: &EvalRecord) -> bool {
    let prediction = text::tokenize(&record.prediction).tokens;
    record.references.iter().any(|reference| {
        contains_contiguous(&prediction, &text::tokenize(reference).tokens)
    })
}

/// Fraction of records whose prediction contains some gold reference
/// as a contiguous token subsequence.
pub fn containment_accuracy(records: &[EvalRecord]) -> MetricReport {
    let per_item = par::map_slice(records, |r| if containment_correct(r) { 1.0 } else { 0.0 });
    let corpus_value = if per_item.is_empty() {
        0.0
    } else {
        per_item.iter().sum::<f64>() / per_item.len() as f64
    };
    MetricReport {
        metric_name: "accuracy".into(),
        corpus_value,
        per_item_values: Some(per_item),
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Reference length closest to the candidate length; ties pick the
/// shorter reference.
fn effective_ref_len(candidate_len: usize, references: &[Vec<String>]) -> usize {
    references
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| {
            (
                (len as i64 - candidate_len as i64).abs(),
                len,
            )
        })
        .unwrap_or(0)
}

/// Corpus-level BLEU with clipped n-gram precisions for n = 1..4,
/// geometric mean, brevity penalty exp(1 - r/c) for c <= r, and an
/// epsilon floor on zero precisions. Scale [0, 100].
pub fn bleu4(records: &[EvalRecord]) -> MetricReport {
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    let mut candidate_len = 0usize;
    let mut ref_len = 0usize;

    for record in records {
        let prediction = text::tokenize(&record.prediction).tokens;
        let references: Vec<Vec<String>> = record
            .references
            .iter()
            .map(|r| text::tokenize(r).tokens)
            .collect();
        candidate_len += prediction.len();
        ref_len += effective_ref_len(prediction.len(), &references);

        for n in 1..=4 {
            let candidate_grams = ngram_counts(&prediction, n);
            let ref_grams: Vec<HashMap<&[String], usize>> =
                references.iter().map(|r| ngram_counts(r, n)).collect();
            for (gram, count) in &candidate_grams {
                let max_ref = ref_grams
                    .iter()
                    .map(|g| g.get(gram).copied().unwrap_or(0))
                    .max()
                    .unwrap_or(0);
                matched[n - 1] += (*count).min(max_ref);
                total[n - 1] += count;
            }
        }
    }

    let mut log_sum = 0.0;
    for n in 0..4 {
        let precision = if total[n] == 0 {
            BLEU_EPSILON
        } else {
            let p = matched[n] as f64 / total[n] as f64;
            if p == 0.0 {
                BLEU_EPSILON
            } else {
                p
            }
        };
        log_sum += precision.ln();
    }
    let geo_mean = (log_sum / 4.0).exp();
    let brevity = if candidate_len == 0 {
        0.0
    } else if candidate_len <= ref_len {
        (1.0 - ref_len as f64 / candidate_len as f64).exp()
    } else {
        1.0
    };

    MetricReport {
        metric_name: "bleu4".into(),
        corpus_value: 100.0 * brevity * geo_mean,
        per_item_values: None,
    }
}

/// Mean per-item ROUGE-L F1 (max over references), scale [0, 100].
pub fn rouge_l(records: &[EvalRecord]) -> MetricReport {
    let per_item = par::map_slice(records, |record| {
        let prediction = text::tokenize(&record.prediction).tokens;
        record
            .references
            .iter()
            .map(|r| rouge_l_f1(&prediction, &text::tokenize(r).tokens))
            .fold(0.0, f64::max)
    });
    let corpus_value = if per_item.is_empty() {
        0.0
    } else {
        100.0 * per_item.iter().sum::<f64>() / per_item.len() as f64
    };
    MetricReport {
        metric_name: "rouge_l".into(),
        corpus_value,
        per_item_values: Some(per_item.iter().map(|v| 100.0 * v).collect()),
    }
}

/// Sum of corpus values over the configured metric list.
pub fn eval_sum(reports: &[MetricReport]) -> f64 {
    reports.iter().map(|r| r.corpus_value).sum()
}

/// Metric selector used by config and CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Accuracy,
    Bleu4,
    RougeL,
}

impl MetricKind {
    pub fn compute(&self, records: &[EvalRecord]) -> MetricReport {
        match self {
            MetricKind::Accuracy => containment_accuracy(records),
            MetricKind::Bleu4 => bleu4(records),
            MetricKind::RougeL => rouge_l(records),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "accuracy" => Ok(MetricKind::Accuracy),
            "bleu4" => Ok(MetricKind::Bleu4),
            "rouge_l" => Ok(MetricKind::RougeL),
            other => Err(Error::Config(format!(
                "unknown metric {other:?}; expected accuracy, bleu4, or rouge_l"
            ))),
        }
    }
}
