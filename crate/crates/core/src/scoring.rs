//! Candidate scoring: token-overlap consistency, unigram negative
//! log-likelihood, mean sequence log-probability and pairwise entailment
//! agreement.

use std::collections::{HashMap, HashSet};

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::http::{self, HttpSettings};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoringError {
    #[error("candidate {0} has no tokens")]
    DegenerateCandidate(usize),
    #[error("sample index {index} out of range for {len} samples")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("{0}")]
    InvalidInput(String),
    #[error("scorer failed: {0}")]
    Scorer(String),
}

fn check_index<T>(i: usize, samples: &[T]) -> Result<(), ScoringError> {
    if i >= samples.len() {
        return Err(ScoringError::IndexOutOfRange { index: i, len: samples.len() });
    }
    Ok(())
}

fn token_sets<S: AsRef<str>>(samples: &[Vec<S>]) -> Vec<HashSet<&str>> {
    samples
        .iter()
        .map(|s| s.iter().map(AsRef::as_ref).collect())
        .collect()
}

/// Integer numerator of the overlap score and the token count of sample `i`.
///
/// The numerator counts, for each token of sample `i`, how many samples
/// contain it (as a set member). `include_self` adds sample `i` itself to the
/// voters, which contributes exactly one per token.
pub fn overlap_counts<S: AsRef<str>>(
    i: usize,
    samples: &[Vec<S>],
    include_self: bool,
) -> Result<(u64, u64), ScoringError> {
    check_index(i, samples)?;
    let own = &samples[i];
    if own.is_empty() {
        return Err(ScoringError::DegenerateCandidate(i));
    }
    let sets = token_sets(samples);
    let mut total = 0u64;
    for token in own {
        let token = token.as_ref();
        total += sets
            .iter()
            .enumerate()
            .filter(|(k, set)| (include_self || *k != i) && set.contains(token))
            .count() as u64;
    }
    Ok((total, own.len() as u64))
}

/// Average, over the tokens of sample `i`, of the number of samples
/// (including `i`) that contain the token. Repetitions within a sample only
/// matter for the scored sample's own token list.
pub fn overlap_score<S: AsRef<str>>(i: usize, samples: &[Vec<S>]) -> Result<f64, ScoringError> {
    let (total, m) = overlap_counts(i, samples, true)?;
    Ok(total as f64 / m as f64)
}

/// [`overlap_score`] with the scored sample excluded from the voters.
pub fn overlap_score_excluding_self<S: AsRef<str>>(
    i: usize,
    samples: &[Vec<S>],
) -> Result<f64, ScoringError> {
    let (total, m) = overlap_counts(i, samples, false)?;
    Ok(total as f64 / m as f64)
}

/// How per-token surprisals are reduced to one sentence score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NllAggregation {
    #[default]
    Mean,
    Max,
}

/// Hallucination score of sample `i` under an add-one smoothed unigram model
/// of the other samples. Lower means more consistent.
///
/// The vocabulary is the union of tokens over all samples, so the model
/// assigns every token of sample `i` a non-zero probability.
pub fn unigram_nll_score<S: AsRef<str>>(
    i: usize,
    samples: &[Vec<S>],
    aggregation: NllAggregation,
) -> Result<f64, ScoringError> {
    check_index(i, samples)?;
    if samples.len() < 2 {
        return Err(ScoringError::InvalidInput(
            "unigram score needs at least two samples".into(),
        ));
    }
    let own = &samples[i];
    if own.is_empty() {
        return Err(ScoringError::DegenerateCandidate(i));
    }
    let vocabulary: HashSet<&str> = samples.iter().flatten().map(AsRef::as_ref).collect();
    let mut counts: HashMap<&str, u64> = HashMap::new();
    let mut other_total = 0u64;
    for (k, sample) in samples.iter().enumerate() {
        if k == i {
            continue;
        }
        for token in sample {
            *counts.entry(token.as_ref()).or_default() += 1;
            other_total += 1;
        }
    }
    let denominator = (other_total + vocabulary.len() as u64) as f64;
    let surprisal = |t: &S| {
        let count = counts.get(t.as_ref()).copied().unwrap_or(0);
        -(((count + 1) as f64) / denominator).ln()
    };
    Ok(match aggregation {
        NllAggregation::Mean => own.iter().map(surprisal).sum::<f64>() / own.len() as f64,
        NllAggregation::Max => own.iter().map(surprisal).fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Arithmetic mean of per-token log-probabilities.
pub fn mean_logprob(token_logprobs: &[f64]) -> Result<f64, ScoringError> {
    if token_logprobs.is_empty() {
        return Err(ScoringError::DegenerateCandidate(0));
    }
    Ok(token_logprobs.iter().sum::<f64>() / token_logprobs.len() as f64)
}

/// Index of the largest score; ties go to the lowest index. NaN never wins.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

/// Index of the smallest score; ties go to the lowest index.
pub fn argmin(scores: &[f64]) -> Option<usize> {
    let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
    argmax(&negated)
}

/// Decides whether one text entails another.
pub trait EntailmentPredicate: Send + Sync {
    fn name(&self) -> &str;
    fn entails(&self, premise: &str, hypothesis: &str) -> Result<bool, ScoringError>;
}

/// Entailment as exact string equality.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactMatchPredicate;

impl EntailmentPredicate for ExactMatchPredicate {
    fn name(&self) -> &str {
        "exact_match"
    }

    fn entails(&self, premise: &str, hypothesis: &str) -> Result<bool, ScoringError> {
        Ok(premise == hypothesis)
    }
}

/// Client for an `/entail` scoring service.
#[derive(Debug, Clone)]
pub struct RemoteEntailment {
    base_url: String,
    client: Client,
    settings: HttpSettings,
}

impl RemoteEntailment {
    pub fn new(base_url: impl Into<String>, settings: HttpSettings) -> Self {
        Self {
            base_url: base_url.into(),
            client: http::build_client(&settings),
            settings,
        }
    }
}

#[derive(Deserialize)]
struct EntailReply {
    entails: bool,
}

impl EntailmentPredicate for RemoteEntailment {
    fn name(&self) -> &str {
        "remote"
    }

    fn entails(&self, premise: &str, hypothesis: &str) -> Result<bool, ScoringError> {
        let url = http::endpoint(&self.base_url, "/entail");
        let body = json!({ "premise": premise, "hypothesis": hypothesis });
        let value = http::post_json_with_retry(&self.client, &url, &body, &self.settings)
            .map_err(|e| ScoringError::Scorer(e.to_string()))?;
        let reply: EntailReply =
            serde_json::from_value(value).map_err(|e| ScoringError::Scorer(e.to_string()))?;
        Ok(reply.entails)
    }
}

/// Number of other responses that entail and are entailed by response `i`.
pub fn agreement_score(
    i: usize,
    responses: &[String],
    pred: &dyn EntailmentPredicate,
) -> Result<u64, ScoringError> {
    check_index(i, responses)?;
    let mut agree = 0;
    for (k, other) in responses.iter().enumerate() {
        if k == i {
            continue;
        }
        if pred.entails(&responses[i], other)? && pred.entails(other, &responses[i])? {
            agree += 1;
        }
    }
    Ok(agree)
}
