//! Generation backends.
//!
//! Every backend implements [`SamplingBackend`]. Local backends additionally
//! implement [`DistributionBackend`], which exposes the full next-token
//! distribution and makes exact greedy, nucleus and beam decoding possible.

mod local;
mod remote;
mod search;
mod synthetic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use local::{ClosureBackend, MarkovBackend, ScriptedBackend, ScriptedReply, ScriptFile};
pub use remote::RemoteBackend;
pub use search::{beam_search, greedy_decode, nucleus_sample, DEFAULT_BEAMS};
pub use synthetic::{synthetic_hallucination_backend, Fact, FactTable, SyntheticBackend};

/// Marker used for the end-of-sequence entry of a vocabulary.
pub const END_TOKEN: &str = "</s>";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    /// Transient transport failure; the call may succeed if repeated.
    #[error("retryable backend failure: {0}")]
    Retryable(String),
    /// The backend failed for good (retries exhausted or a server-side error).
    #[error("backend run failed: {0}")]
    Run(String),
    /// The request or backend setup cannot work.
    #[error("backend configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: usize,
    pub top_p: f64,
    pub temperature: f64,
    pub seed: Option<u64>,
    pub want_logprobs: bool,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>, max_tokens: usize) -> Self {
        Self {
            prompt: prompt.into(),
            max_tokens,
            top_p: 1.0,
            temperature: 1.0,
            seed: None,
            want_logprobs: false,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_tokens == 0 {
            return Err(BackendError::Config("max_tokens must be at least 1".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(BackendError::Config(format!("top_p {} outside (0, 1]", self.top_p)));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(BackendError::Config(format!("invalid temperature {}", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    /// The model emitted end-of-sequence inside this completion.
    pub ended: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<f64>>,
}

/// Anything that can sample a continuation of a prompt.
///
/// Implementations must tolerate concurrent `complete` calls; deterministic
/// backends return identical results for identical requests.
pub trait SamplingBackend: Send + Sync {
    fn name(&self) -> &str;
    fn supports_logprobs(&self) -> bool;
    /// Whether `temperature == 0` means argmax decoding.
    fn supports_greedy(&self) -> bool {
        true
    }
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, BackendError>;
    /// The distribution view of this backend, when it has one.
    fn as_distribution(&self) -> Option<&dyn DistributionBackend> {
        None
    }
}

/// Backend with an explicit, finite next-token distribution.
pub trait DistributionBackend: SamplingBackend {
    /// All tokens, including the end token.
    fn vocabulary(&self) -> &[String];
    /// Index of the end-of-sequence token in [`DistributionBackend::vocabulary`].
    fn end_token(&self) -> usize;
    /// Probabilities aligned with the vocabulary; they sum to one.
    fn next_token_dist(&self, prompt: &str, prefix: &[usize]) -> Vec<f64>;
}

/// Validates the request, then delegates to the backend.
pub fn complete(
    backend: &dyn SamplingBackend,
    req: &CompletionRequest,
) -> Result<CompletionResult, BackendError> {
    req.validate()?;
    backend.complete(req)
}

/// `complete` for distribution backends: argmax at temperature zero,
/// nucleus sampling otherwise.
pub fn complete_from_distribution<D: DistributionBackend + ?Sized>(
    backend: &D,
    req: &CompletionRequest,
    default_seed: u64,
) -> Result<CompletionResult, BackendError> {
    req.validate()?;
    let mut result = if req.temperature == 0.0 {
        greedy_decode(backend, &req.prompt, req.max_tokens)
    } else {
        search::nucleus_sample_tempered(
            backend,
            &req.prompt,
            req.top_p,
            req.temperature,
            req.seed.unwrap_or(default_seed),
            req.max_tokens,
        )
    };
    if !req.want_logprobs {
        result.token_logprobs = None;
    }
    Ok(result)
}

fn is_attached_punct(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| matches!(c, '.' | ',' | '!' | '?' | ';' | ':' | '%' | ')'))
}

/// Renders word-level vocabulary tokens: single spaces between tokens, no
/// space before closing punctuation.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for token in tokens {
        let token = token.as_ref();
        if !out.is_empty() && !is_attached_punct(token) {
            out.push(' ');
        }
        out.push_str(token);
    }
    out
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Per-request seed for sample `index` of `round` of one document.
///
/// Stable across platforms and independent of scheduling, so concurrent
/// sampling never changes results.
pub fn derive_seed(run_seed: u64, document_id: &str, round: usize, index: usize) -> u64 {
    let mut doc_hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in document_id.as_bytes() {
        doc_hash ^= u64::from(*b);
        doc_hash = doc_hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut h = splitmix64(run_seed);
    h = splitmix64(h ^ doc_hash);
    h = splitmix64(h ^ round as u64);
    splitmix64(h ^ index as u64)
}
