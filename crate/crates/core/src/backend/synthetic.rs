//! A seeded backend whose sentences each carry one fact slot that is filled
//! with the true value at a fixed rate and with a decoy otherwise.
//!
//! Sentence `t` always reads `The <subject_t> is <value>.` and the document
//! ends after the last fact. Which sentence comes next is read from the
//! number of periods after the prompt anchor (default `"Summary:"`) plus the
//! periods generated so far, so re-conditioning on chosen sentences advances
//! the document exactly as a real model would.

use serde::{Deserialize, Serialize};

use super::{
    complete_from_distribution, BackendError, CompletionRequest, CompletionResult,
    DistributionBackend, SamplingBackend, END_TOKEN,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub subject: String,
    pub value: String,
}

impl Fact {
    pub fn new(subject: impl Into<String>, value: impl Into<String>) -> Self {
        Self { subject: subject.into(), value: value.into() }
    }
}

/// Ground truth for one synthetic document.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactTable {
    pub facts: Vec<Fact>,
}

impl FactTable {
    pub fn new(facts: Vec<Fact>) -> Self {
        Self { facts }
    }

    /// `count` facts with generated subjects and values, distinct per `tag`.
    pub fn generated(tag: &str, count: usize) -> Self {
        Self::new(
            (0..count)
                .map(|i| Fact::new(format!("item{i}{tag}"), format!("value{i}{tag}")))
                .collect(),
        )
    }

    /// The text a perfectly faithful sample would produce.
    pub fn true_text(&self) -> String {
        self.facts
            .iter()
            .map(|f| format!("The {} is {}.", f.subject, f.value))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

const THE: usize = 0;
const IS: usize = 1;
const PERIOD: usize = 2;
const END: usize = 3;
const FIXED: usize = 4;

#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    table: FactTable,
    fidelity: f64,
    decoys: usize,
    seed: u64,
    anchor: String,
    vocabulary: Vec<String>,
}

/// Builds a [`SyntheticBackend`]. `fidelity` must lie in (0, 1] and at least
/// one decoy is required.
pub fn synthetic_hallucination_backend(
    truth: FactTable,
    fidelity: f64,
    decoys: usize,
    seed: u64,
) -> Result<SyntheticBackend, BackendError> {
    if !(fidelity > 0.0 && fidelity <= 1.0) {
        return Err(BackendError::Config(format!("fidelity {fidelity} outside (0, 1]")));
    }
    if decoys == 0 {
        return Err(BackendError::Config("at least one decoy is required".into()));
    }
    let mut vocabulary: Vec<String> =
        vec!["The".into(), "is".into(), ".".into(), END_TOKEN.into()];
    for fact in &truth.facts {
        vocabulary.push(fact.subject.clone());
        vocabulary.push(fact.value.clone());
        for d in 1..=decoys {
            vocabulary.push(decoy_value(&fact.value, d));
        }
    }
    Ok(SyntheticBackend {
        table: truth,
        fidelity,
        decoys,
        seed,
        anchor: "Summary:".into(),
        vocabulary,
    })
}

/// Surface form of decoy `d` (1-based) for a true value.
pub fn decoy_value(value: &str, d: usize) -> String {
    format!("{value}-alt{d}")
}

impl SyntheticBackend {
    /// Changes the prompt marker after which chosen sentences are counted.
    pub fn with_anchor(mut self, anchor: impl Into<String>) -> Self {
        self.anchor = anchor.into();
        self
    }

    pub fn table(&self) -> &FactTable {
        &self.table
    }

    pub fn fidelity(&self) -> f64 {
        self.fidelity
    }

    pub fn decoys(&self) -> usize {
        self.decoys
    }

    fn subject_token(&self, fact: usize) -> usize {
        FIXED + fact * (self.decoys + 2)
    }

    fn value_token(&self, fact: usize) -> usize {
        self.subject_token(fact) + 1
    }

    fn sentences_in_prompt(&self, prompt: &str) -> usize {
        let tail = match prompt.rfind(&self.anchor) {
            Some(at) => &prompt[at + self.anchor.len()..],
            None => prompt,
        };
        tail.matches('.').count()
    }
}

impl SamplingBackend for SyntheticBackend {
    fn name(&self) -> &str {
        "synthetic"
    }

    fn supports_logprobs(&self) -> bool {
        true
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        complete_from_distribution(self, req, self.seed)
    }

    fn as_distribution(&self) -> Option<&dyn DistributionBackend> {
        Some(self)
    }
}

impl DistributionBackend for SyntheticBackend {
    fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    fn end_token(&self) -> usize {
        END
    }

    fn next_token_dist(&self, prompt: &str, prefix: &[usize]) -> Vec<f64> {
        let generated = prefix.iter().filter(|&&t| t == PERIOD).count();
        let sentence = self.sentences_in_prompt(prompt) + generated;
        let position = prefix.iter().rev().take_while(|&&t| t != PERIOD).count();
        let mut dist = vec![0.0; self.vocabulary.len()];
        if sentence >= self.table.facts.len() {
            dist[END] = 1.0;
            return dist;
        }
        match position {
            0 => dist[THE] = 1.0,
            1 => dist[self.subject_token(sentence)] = 1.0,
            2 => dist[IS] = 1.0,
            3 => {
                let truth = self.value_token(sentence);
                dist[truth] = self.fidelity;
                let each = (1.0 - self.fidelity) / self.decoys as f64;
                for d in 1..=self.decoys {
                    dist[truth + d] = each;
                }
            }
            _ => dist[PERIOD] = 1.0,
        }
        dist
    }
}
