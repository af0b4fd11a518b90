//! ROUGE-1 F1, summary lengths and per-method run reports.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoder::{Method, StopReason};
use crate::textproc::word_tokens;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("usage error: {0}")]
    Usage(String),
}

/// Clipped unigram F1 between two texts after word-token normalization.
pub fn rouge1_f1(candidate: &str, reference: &str) -> f64 {
    let cand = word_tokens(candidate);
    let refs = word_tokens(reference);
    if cand.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let mut ref_counts: HashMap<&str, usize> = HashMap::new();
    for t in &refs {
        *ref_counts.entry(t.as_str()).or_default() += 1;
    }
    let mut matched = 0usize;
    for t in &cand {
        if let Some(c) = ref_counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                matched += 1;
            }
        }
    }
    if matched == 0 {
        return 0.0;
    }
    let precision = matched as f64 / cand.len() as f64;
    let recall = matched as f64 / refs.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Length in word tokens.
pub fn summary_length_tokens(text: &str) -> usize {
    word_tokens(text).len()
}

/// Per-document evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub document_id: String,
    pub method: Method,
    /// Present only when the dataset record had a reference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rouge1_f1: Option<f64>,
    pub length_tokens: usize,
    pub stop_reason: StopReason,
}

impl EvalRecord {
    pub fn evaluate(document_id: &str, method: Method, summary: &str, reference: Option<&str>, stop_reason: StopReason) -> Self {
        Self {
            document_id: document_id.to_string(),
            method,
            rouge1_f1: reference.map(|r| rouge1_f1(summary, r)),
            length_tokens: summary_length_tokens(summary),
            stop_reason,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub method: Method,
    pub n_docs: usize,
    /// Mean over documents that had a reference.
    pub rouge1_f1_mean: Option<f64>,
    pub rouge1_f1_count: usize,
    pub length_mean: f64,
    pub stop_reasons: BTreeMap<String, usize>,
}

/// One report per method, ordered by method.
pub fn aggregate_report(records: &[EvalRecord]) -> Result<Vec<Report>, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Usage("no records to aggregate".into()));
    }
    let mut by_method: BTreeMap<Method, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        by_method.entry(r.method).or_default().push(r);
    }
    Ok(by_method
        .into_iter()
        .map(|(method, group)| {
            let f1: Vec<f64> = group.iter().filter_map(|r| r.rouge1_f1).collect();
            let mut stop_reasons = BTreeMap::new();
            for r in &group {
                *stop_reasons.entry(r.stop_reason.as_str().to_string()).or_default() += 1;
            }
            Report {
                method,
                n_docs: group.len(),
                rouge1_f1_mean: (!f1.is_empty()).then(|| f1.iter().sum::<f64>() / f1.len() as f64),
                rouge1_f1_count: f1.len(),
                length_mean: group.iter().map(|r| r.length_tokens as f64).sum::<f64>() / group.len() as f64,
                stop_reasons,
            }
        })
        .collect())
}
