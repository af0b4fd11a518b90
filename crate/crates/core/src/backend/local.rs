//! In-process backends for tests and offline runs.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    complete_from_distribution, derive_seed, BackendError, CompletionRequest, CompletionResult,
    DistributionBackend, SamplingBackend, END_TOKEN,
};

type DistFn = dyn Fn(&str, &[usize]) -> Vec<f64> + Send + Sync;

/// Distribution backend defined by a function of (prompt, generated prefix).
///
/// The vocabulary must contain [`END_TOKEN`].
#[derive(Clone)]
pub struct ClosureBackend {
    vocabulary: Vec<String>,
    end: usize,
    dist: Arc<DistFn>,
    seed: u64,
}

impl ClosureBackend {
    pub fn new<F>(vocabulary: &[&str], dist: F) -> Self
    where
        F: Fn(&str, &[usize]) -> Vec<f64> + Send + Sync + 'static,
    {
        let vocabulary: Vec<String> = vocabulary.iter().map(|s| s.to_string()).collect();
        let end = vocabulary
            .iter()
            .position(|t| t == END_TOKEN)
            .expect("vocabulary must contain the end token");
        Self { vocabulary, end, dist: Arc::new(dist), seed: 0 }
    }
}

impl SamplingBackend for ClosureBackend {
    fn name(&self) -> &str {
        "closure"
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

impl DistributionBackend for ClosureBackend {
    fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    fn end_token(&self) -> usize {
        self.end
    }

    fn next_token_dist(&self, prompt: &str, prefix: &[usize]) -> Vec<f64> {
        (self.dist)(prompt, prefix)
    }
}

/// Random first-order Markov model over a small word vocabulary.
///
/// The next-token distribution depends only on the previous token: the last
/// generated token, or the last whitespace-separated word of the prompt when
/// nothing has been generated yet. Every row gives the end token some mass,
/// so sampling terminates.
#[derive(Debug, Clone)]
pub struct MarkovBackend {
    vocabulary: Vec<String>,
    /// Row per vocabulary entry, plus a final row for unknown context.
    rows: Vec<Vec<f64>>,
    seed: u64,
}

const MARKOV_WORDS: &[&str] = &[
    "The", "report", "said", "prices", "rose", "sharply", "in", "March", "officials", "were",
    "cautious", "about", "growth", "It", "is", "unclear", "why", "markets", "fell", "today",
];

impl MarkovBackend {
    /// Builds a random model with `words` content words (at most 20), a
    /// period and the end token.
    pub fn random(seed: u64, words: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let words = words.clamp(1, MARKOV_WORDS.len());
        let mut vocabulary: Vec<String> = MARKOV_WORDS[..words].iter().map(|w| w.to_string()).collect();
        vocabulary.push(".".into());
        vocabulary.push(END_TOKEN.into());
        let v = vocabulary.len();
        let rows = (0..=v)
            .map(|_| {
                let mut row: Vec<f64> = (0..v)
                    .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen::<f64>() })
                    .collect();
                row[v - 2] += 0.15;
                row[v - 1] += 0.05;
                let z: f64 = row.iter().sum();
                row.iter_mut().for_each(|p| *p /= z);
                row
            })
            .collect();
        Self { vocabulary, rows, seed }
    }

    fn context_row(&self, prompt: &str, prefix: &[usize]) -> usize {
        if let Some(&last) = prefix.last() {
            return last;
        }
        let last_word = prompt.split_whitespace().last().unwrap_or("");
        let context = if last_word.ends_with('.') { "." } else { last_word };
        self.vocabulary
            .iter()
            .position(|t| t == context)
            .unwrap_or(self.vocabulary.len())
    }
}

impl SamplingBackend for MarkovBackend {
    fn name(&self) -> &str {
        "markov"
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

impl DistributionBackend for MarkovBackend {
    fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    fn end_token(&self) -> usize {
        self.vocabulary.len() - 1
    }

    fn next_token_dist(&self, prompt: &str, prefix: &[usize]) -> Vec<f64> {
        self.rows[self.context_row(prompt, prefix)].clone()
    }
}

/// One canned completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedReply {
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub ended: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<f64>>,
    /// When set, the request fails with this message instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ScriptedReply {
    pub fn text(text: impl Into<String>, ended: bool) -> Self {
        Self { text: text.into(), ended, token_logprobs: None, error: None }
    }

    pub fn with_logprobs(mut self, logprobs: Vec<f64>) -> Self {
        self.token_logprobs = Some(logprobs);
        self
    }

    pub fn failure(message: impl Into<String>) -> Self {
        Self { text: String::new(), ended: false, token_logprobs: None, error: Some(message.into()) }
    }
}

/// On-disk form of a [`ScriptedBackend`]: replies per document, per round,
/// per sample index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptFile {
    #[serde(default)]
    pub supports_logprobs: bool,
    pub documents: HashMap<String, Vec<Vec<ScriptedReply>>>,
}

/// Replays canned replies keyed by the per-request seed.
///
/// Seeds are derived with [`derive_seed`] from the run seed, document id,
/// round and sample index, so replies reach the right request regardless of
/// call order or concurrency.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    run_seed: u64,
    replies: HashMap<u64, ScriptedReply>,
    supports_logprobs: bool,
}

impl ScriptedBackend {
    pub fn new(run_seed: u64) -> Self {
        Self { run_seed, replies: HashMap::new(), supports_logprobs: false }
    }

    pub fn with_logprobs(mut self, supported: bool) -> Self {
        self.supports_logprobs = supported;
        self
    }

    /// Registers `rounds[r][i]` as the reply to sample `i` of round `r`.
    pub fn script(mut self, document_id: &str, rounds: Vec<Vec<ScriptedReply>>) -> Self {
        for (r, round) in rounds.into_iter().enumerate() {
            for (i, reply) in round.into_iter().enumerate() {
                self.replies.insert(derive_seed(self.run_seed, document_id, r, i), reply);
            }
        }
        self
    }

    pub fn from_script(run_seed: u64, script: ScriptFile) -> Self {
        let mut backend = Self::new(run_seed).with_logprobs(script.supports_logprobs);
        let mut docs: Vec<_> = script.documents.into_iter().collect();
        docs.sort_by(|a, b| a.0.cmp(&b.0));
        for (id, rounds) in docs {
            backend = backend.script(&id, rounds);
        }
        backend
    }

    pub fn load(run_seed: u64, path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("cannot read script {}: {e}", path.display())))?;
        let script: ScriptFile = serde_json::from_str(&text)
            .map_err(|e| BackendError::Config(format!("invalid script {}: {e}", path.display())))?;
        Ok(Self::from_script(run_seed, script))
    }
}

impl SamplingBackend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    fn supports_logprobs(&self) -> bool {
        self.supports_logprobs
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        req.validate()?;
        let seed = req
            .seed
            .ok_or_else(|| BackendError::Config("scripted backend needs per-request seeds".into()))?;
        let reply = self
            .replies
            .get(&seed)
            .ok_or_else(|| BackendError::Run(format!("no scripted reply for seed {seed}")))?;
        if let Some(msg) = &reply.error {
            return Err(BackendError::Run(msg.clone()));
        }
        let words: Vec<&str> = reply.text.split_whitespace().collect();
        let truncated = words.len() > req.max_tokens;
        let text = if truncated { words[..req.max_tokens].join(" ") } else { reply.text.clone() };
        let token_logprobs = if req.want_logprobs {
            let lp = reply
                .token_logprobs
                .clone()
                .ok_or_else(|| BackendError::Run("scripted reply has no logprobs".into()))?;
            Some(lp)
        } else {
            None
        };
        Ok(CompletionResult { text, ended: reply.ended && !truncated, token_logprobs })
    }
}
