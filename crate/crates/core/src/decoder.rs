//! Decoding drivers: sentence-level sample-and-select, its independent
//! (non-reconditioned) ablation, unigram-score selection, whole-response
//! reranking, and the plain greedy, nucleus and beam baselines.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{self, derive_seed, BackendError, CompletionRequest, CompletionResult, SamplingBackend};
use crate::grammar::{check_sentence, HeuristicParser, ParseProvider};
use crate::scoring::{
    agreement_score, argmax, argmin, mean_logprob, overlap_score, unigram_nll_score,
    EntailmentPredicate, ExactMatchPredicate, NllAggregation, ScoringError,
};
use crate::textproc::{word_tokens, RuleSegmenter, Segmenter, WordToken};

pub const DEFAULT_PROMPT_TEMPLATE: &str = "Summarize the following article:\n{article}\nSummary:";
pub const ARTICLE_PLACEHOLDER: &str = "{article}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SampleSelect,
    Independent,
    SelfcheckSelect,
    Pcrr,
    Scrr,
    Greedy,
    Nucleus,
    Beam,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::SampleSelect,
        Method::Independent,
        Method::SelfcheckSelect,
        Method::Pcrr,
        Method::Scrr,
        Method::Greedy,
        Method::Nucleus,
        Method::Beam,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::SampleSelect => "sample_select",
            Method::Independent => "independent",
            Method::SelfcheckSelect => "selfcheck_select",
            Method::Pcrr => "pcrr",
            Method::Scrr => "scrr",
            Method::Greedy => "greedy",
            Method::Nucleus => "nucleus",
            Method::Beam => "beam",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

/// Everything that controls one decoding run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    /// Samples per round.
    pub n: usize,
    pub top_p: f64,
    pub temperature: f64,
    pub max_sentence_tokens: usize,
    pub max_sentences: usize,
    pub seed: u64,
    pub method: Method,
    pub prompt_template: String,
    /// Placed between the prompt and each chosen sentence, and between
    /// sentences of the final summary.
    pub joiner: String,
    pub nll_aggregation: NllAggregation,
    pub beams: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            n: 5,
            top_p: 0.9,
            temperature: 1.0,
            max_sentence_tokens: 128,
            max_sentences: 20,
            seed: 0,
            method: Method::SampleSelect,
            prompt_template: DEFAULT_PROMPT_TEMPLATE.into(),
            joiner: " ".into(),
            nll_aggregation: NllAggregation::Mean,
            beams: backend::DEFAULT_BEAMS,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), DecodeError> {
        let fail = |msg: String| Err(DecodeError::Config(msg));
        if self.n == 0 {
            return fail("n must be at least 1".into());
        }
        if self.max_sentences == 0 {
            return fail("max_sentences must be at least 1".into());
        }
        if self.max_sentence_tokens == 0 {
            return fail("max_sentence_tokens must be at least 1".into());
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return fail(format!("top_p {} outside (0, 1]", self.top_p));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return fail(format!("invalid temperature {}", self.temperature));
        }
        if self.beams == 0 {
            return fail("beams must be at least 1".into());
        }
        let placeholders = self.prompt_template.matches(ARTICLE_PLACEHOLDER).count();
        if placeholders != 1 {
            return fail(format!(
                "prompt template must contain {ARTICLE_PLACEHOLDER} exactly once (found {placeholders})"
            ));
        }
        if matches!(self.method, Method::SelfcheckSelect | Method::Pcrr | Method::Scrr) && self.n < 2 {
            return fail(format!("{} needs n >= 2", self.method));
        }
        Ok(())
    }

    pub fn render_prompt(&self, article: &str) -> String {
        self.prompt_template.replacen(ARTICLE_PLACEHOLDER, article, 1)
    }

    fn response_tokens(&self) -> usize {
        self.max_sentences.saturating_mul(self.max_sentence_tokens)
    }
}

/// One sampled continuation as seen by the selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleCandidate {
    pub text: String,
    pub tokens: Vec<WordToken>,
    pub ended: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<f64>>,
}

impl SampleCandidate {
    pub fn new(text: impl Into<String>, ended: bool) -> Self {
        let text = text.into();
        Self { tokens: word_tokens(&text), text, ended, token_logprobs: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    #[serde(flatten)]
    pub candidate: SampleCandidate,
    pub score: f64,
    /// Excluded from selection (failed the grammar check or has no tokens).
    pub filtered: bool,
}

/// The scoring rule a round was decided by.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RoundScorer {
    /// Token-overlap votes; highest wins.
    Overlap,
    /// Unigram surprisal against the other samples; lowest wins.
    UnigramNll { aggregation: NllAggregation },
    /// Mean token log-probability; highest wins.
    MeanLogprob,
    /// Bidirectional entailment count; highest wins.
    Agreement { predicate: String },
    /// A single decoded response; nothing to choose.
    Single,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round_index: usize,
    pub scorer: RoundScorer,
    pub candidates: Vec<ScoredSample>,
    pub chosen: Option<usize>,
    pub any_ended: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    SampleEnded,
    AbortedAllFiltered,
    MaxSentences,
    /// The run stopped on a backend or scorer failure.
    Failed,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::SampleEnded => "sample_ended",
            StopReason::AbortedAllFiltered => "aborted_all_filtered",
            StopReason::MaxSentences => "max_sentences",
            StopReason::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTrace {
    pub document_id: String,
    pub method: Method,
    pub sentences: Vec<String>,
    pub rounds: Vec<RoundTrace>,
    pub stop_reason: StopReason,
}

impl SummaryTrace {
    fn new(document_id: &str, method: Method) -> Self {
        Self {
            document_id: document_id.to_string(),
            method,
            sentences: Vec::new(),
            rounds: Vec::new(),
            stop_reason: StopReason::Failed,
        }
    }

    pub fn summary(&self, joiner: &str) -> String {
        self.sentences.join(joiner)
    }
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("backend failure: {message}")]
    Run { message: String, partial: Box<SummaryTrace> },
    #[error("scorer failure: {message}")]
    Scorer { message: String, partial: Box<SummaryTrace> },
}

impl DecodeError {
    /// The trace accumulated before the failure, if any.
    pub fn partial(&self) -> Option<&SummaryTrace> {
        match self {
            DecodeError::Config(_) => None,
            DecodeError::Run { partial, .. } | DecodeError::Scorer { partial, .. } => Some(partial),
        }
    }
}

fn run_error(err: BackendError, trace: SummaryTrace) -> DecodeError {
    match err {
        BackendError::Config(msg) => DecodeError::Config(msg),
        other => DecodeError::Run { message: other.to_string(), partial: Box::new(trace) },
    }
}

fn scorer_error(err: ScoringError, trace: SummaryTrace) -> DecodeError {
    DecodeError::Scorer { message: err.to_string(), partial: Box::new(trace) }
}

/// Scores for every candidate of a round under `scorer`.
///
/// Filtered candidates get score zero but still act as voters for the others.
pub fn score_candidates(
    scorer: &RoundScorer,
    candidates: &[SampleCandidate],
    filtered: &[bool],
    predicate: Option<&dyn EntailmentPredicate>,
) -> Result<Vec<f64>, ScoringError> {
    let tokens: Vec<Vec<WordToken>> = candidates.iter().map(|c| c.tokens.clone()).collect();
    let texts: Vec<String> = candidates.iter().map(|c| c.text.clone()).collect();
    (0..candidates.len())
        .into_par_iter()
        .map(|i| {
            if filtered[i] {
                return Ok(0.0);
            }
            match scorer {
                RoundScorer::Overlap => overlap_score(i, &tokens),
                RoundScorer::UnigramNll { aggregation } => unigram_nll_score(i, &tokens, *aggregation),
                RoundScorer::MeanLogprob => {
                    mean_logprob(candidates[i].token_logprobs.as_deref().unwrap_or_default())
                }
                RoundScorer::Agreement { .. } => {
                    let pred = predicate.ok_or_else(|| {
                        ScoringError::Scorer("agreement scoring needs an entailment predicate".into())
                    })?;
                    agreement_score(i, &texts, pred).map(|s| s as f64)
                }
                RoundScorer::Single => Ok(0.0),
            }
        })
        .collect()
}

/// Winner among unfiltered candidates; ties go to the lowest index.
pub fn select(scorer: &RoundScorer, scores: &[f64], filtered: &[bool]) -> Option<usize> {
    let lower_wins = matches!(scorer, RoundScorer::UnigramNll { .. });
    let masked: Vec<f64> = scores
        .iter()
        .zip(filtered)
        .map(|(&s, &f)| if f { f64::NAN } else { s })
        .collect();
    if lower_wins {
        argmin(&masked)
    } else {
        argmax(&masked)
    }
}

/// Runs decoding methods against one backend and parse provider.
pub struct Decoder<'a> {
    backend: &'a dyn SamplingBackend,
    parser: &'a dyn ParseProvider,
    segmenter: &'a dyn Segmenter,
    entailment: &'a dyn EntailmentPredicate,
}

static DEFAULT_SEGMENTER: RuleSegmenter = RuleSegmenter;
static DEFAULT_ENTAILMENT: ExactMatchPredicate = ExactMatchPredicate;
static DEFAULT_PARSER: HeuristicParser = HeuristicParser;

impl<'a> Decoder<'a> {
    pub fn new(backend: &'a dyn SamplingBackend, parser: &'a dyn ParseProvider) -> Self {
        Self {
            backend,
            parser,
            segmenter: &DEFAULT_SEGMENTER,
            entailment: &DEFAULT_ENTAILMENT,
        }
    }

    /// Decoder with the offline heuristic parser.
    pub fn offline(backend: &'a dyn SamplingBackend) -> Self {
        Self::new(backend, &DEFAULT_PARSER)
    }

    pub fn with_segmenter(mut self, segmenter: &'a dyn Segmenter) -> Self {
        self.segmenter = segmenter;
        self
    }

    pub fn with_entailment(mut self, entailment: &'a dyn EntailmentPredicate) -> Self {
        self.entailment = entailment;
        self
    }

    /// Dispatches on `cfg.method`.
    pub fn decode(&self, document_id: &str, article: &str, cfg: &GenerationConfig) -> Result<SummaryTrace, DecodeError> {
        cfg.validate()?;
        match cfg.method {
            Method::SampleSelect => self.sample_and_select(document_id, article, cfg),
            Method::SelfcheckSelect => self.selfcheck_select(document_id, article, cfg),
            Method::Independent => self.independent_select(document_id, article, cfg),
            Method::Pcrr | Method::Scrr => self.rerank_responses(document_id, article, cfg),
            Method::Greedy | Method::Nucleus | Method::Beam => self.baseline(document_id, article, cfg),
        }
    }

    /// Sentence-by-sentence sampling with token-overlap voting.
    ///
    /// Each round draws `n` one-sentence continuations of the prompt plus the
    /// sentences chosen so far, zeroes the scores of candidates that fail the
    /// grammar check, and appends the highest-scoring candidate. Decoding
    /// stops after a round in which any sample reached end-of-sequence, when
    /// every candidate was filtered, or at `max_sentences`.
    pub fn sample_and_select(&self, document_id: &str, article: &str, cfg: &GenerationConfig) -> Result<SummaryTrace, DecodeError> {
        self.iterate(document_id, article, cfg, RoundScorer::Overlap, Method::SampleSelect)
    }

    /// The same loop as [`Decoder::sample_and_select`], selecting the lowest
    /// unigram hallucination score. Filtered candidates are excluded rather
    /// than zeroed, since a zero would win an argmin.
    pub fn selfcheck_select(&self, document_id: &str, article: &str, cfg: &GenerationConfig) -> Result<SummaryTrace, DecodeError> {
        if cfg.n < 2 {
            return Err(DecodeError::Config("selfcheck_select needs n >= 2".into()));
        }
        let scorer = RoundScorer::UnigramNll { aggregation: cfg.nll_aggregation };
        self.iterate(document_id, article, cfg, scorer, Method::SelfcheckSelect)
    }

    fn iterate(
        &self,
        document_id: &str,
        article: &str,
        cfg: &GenerationConfig,
        scorer: RoundScorer,
        method: Method,
    ) -> Result<SummaryTrace, DecodeError> {
        cfg.validate()?;
        let mut trace = SummaryTrace::new(document_id, method);
        let mut prompt = cfg.render_prompt(article);
        for round in 0..cfg.max_sentences {
            let drawn = match self.draw_sentences(document_id, &prompt, cfg, round) {
                Ok(d) => d,
                Err(e) => return Err(run_error(e, trace)),
            };
            let record = match self.decide(round, scorer.clone(), drawn) {
                Ok(r) => r,
                Err(e) => return Err(scorer_error(e, trace)),
            };
            let any_ended = record.any_ended;
            let chosen = record.chosen;
            trace.rounds.push(record);
            let Some(chosen) = chosen else {
                trace.stop_reason = StopReason::AbortedAllFiltered;
                return Ok(trace);
            };
            let sentence = trace.rounds[round].candidates[chosen].candidate.text.clone();
            prompt.push_str(&cfg.joiner);
            prompt.push_str(&sentence);
            trace.sentences.push(sentence);
            if any_ended {
                trace.stop_reason = StopReason::SampleEnded;
                return Ok(trace);
            }
        }
        trace.stop_reason = StopReason::MaxSentences;
        Ok(trace)
    }

    fn request(&self, document_id: &str, prompt: &str, cfg: &GenerationConfig, round: usize, index: usize, max_tokens: usize) -> CompletionRequest {
        CompletionRequest {
            prompt: prompt.to_string(),
            max_tokens,
            top_p: cfg.top_p,
            temperature: cfg.temperature,
            seed: Some(derive_seed(cfg.seed, document_id, round, index)),
            want_logprobs: false,
        }
    }

    /// Draws `n` continuations in parallel and cuts each to its first sentence.
    fn draw_sentences(&self, document_id: &str, prompt: &str, cfg: &GenerationConfig, round: usize) -> Result<Vec<SampleCandidate>, BackendError> {
        (0..cfg.n)
            .into_par_iter()
            .map(|i| {
                let req = self.request(document_id, prompt, cfg, round, i, cfg.max_sentence_tokens);
                let result = backend::complete(self.backend, &req)?;
                Ok(first_sentence(self.segmenter, &result))
            })
            .collect()
    }

    fn draw_responses(&self, document_id: &str, prompt: &str, cfg: &GenerationConfig, want_logprobs: bool) -> Result<Vec<CompletionResult>, BackendError> {
        (0..cfg.n)
            .into_par_iter()
            .map(|i| {
                let mut req = self.request(document_id, prompt, cfg, 0, i, cfg.response_tokens());
                req.want_logprobs = want_logprobs;
                backend::complete(self.backend, &req)
            })
            .collect()
    }

    fn is_filtered(&self, candidate: &SampleCandidate) -> bool {
        candidate.tokens.is_empty() || !check_sentence(self.parser, &candidate.text)
    }

    /// Filters, scores and selects one round of candidates.
    fn decide(&self, round: usize, scorer: RoundScorer, candidates: Vec<SampleCandidate>) -> Result<RoundTrace, ScoringError> {
        let filtered: Vec<bool> = candidates.par_iter().map(|c| self.is_filtered(c)).collect();
        let scores = score_candidates(&scorer, &candidates, &filtered, Some(self.entailment))?;
        let chosen = select(&scorer, &scores, &filtered);
        let any_ended = candidates.iter().any(|c| c.ended);
        let candidates = candidates
            .into_iter()
            .zip(scores.into_iter().zip(filtered))
            .map(|(candidate, (score, filtered))| ScoredSample { candidate, score, filtered })
            .collect();
        Ok(RoundTrace { round_index: round, scorer, candidates, chosen, any_ended })
    }

    /// Ablation without re-conditioning: `n` complete responses are drawn
    /// once and voted on position by position.
    ///
    /// Position `t` is scored over the `t`-th sentences of the responses that
    /// have one. Decoding stops where fewer than `min(2, n)` responses still
    /// have a sentence, or at `max_sentences`.
    pub fn independent_select(&self, document_id: &str, article: &str, cfg: &GenerationConfig) -> Result<SummaryTrace, DecodeError> {
        cfg.validate()?;
        let mut trace = SummaryTrace::new(document_id, Method::Independent);
        let prompt = cfg.render_prompt(article);
        let responses = match self.draw_responses(document_id, &prompt, cfg, false) {
            Ok(r) => r,
            Err(e) => return Err(run_error(e, trace)),
        };
        let split: Vec<Vec<String>> = responses
            .iter()
            .map(|r| self.segmenter.split(&r.text).into_iter().map(|s| s.text).collect())
            .collect();
        let needed = cfg.n.min(2);
        for position in 0..cfg.max_sentences {
            let contributors: Vec<usize> = (0..split.len()).filter(|&k| split[k].len() > position).collect();
            if contributors.len() < needed {
                trace.stop_reason = StopReason::SampleEnded;
                return Ok(trace);
            }
            let candidates: Vec<SampleCandidate> = contributors
                .iter()
                .map(|&k| {
                    let last = position + 1 == split[k].len();
                    SampleCandidate::new(split[k][position].clone(), last && responses[k].ended)
                })
                .collect();
            let record = match self.decide(position, RoundScorer::Overlap, candidates) {
                Ok(r) => r,
                Err(e) => return Err(scorer_error(e, trace)),
            };
            let chosen = record.chosen;
            trace.rounds.push(record);
            let Some(chosen) = chosen else {
                trace.stop_reason = StopReason::AbortedAllFiltered;
                return Ok(trace);
            };
            trace.sentences.push(trace.rounds[position].candidates[chosen].candidate.text.clone());
        }
        trace.stop_reason = StopReason::MaxSentences;
        Ok(trace)
    }

    /// Whole-response reranking: mean log-probability (`pcrr`) or
    /// entailment agreement (`scrr`) over `n` complete responses.
    pub fn rerank_responses(&self, document_id: &str, article: &str, cfg: &GenerationConfig) -> Result<SummaryTrace, DecodeError> {
        cfg.validate()?;
        let scorer = match cfg.method {
            Method::Pcrr => {
                if !self.backend.supports_logprobs() {
                    return Err(DecodeError::Config(format!(
                        "pcrr needs token logprobs, which backend {} does not provide",
                        self.backend.name()
                    )));
                }
                RoundScorer::MeanLogprob
            }
            Method::Scrr => RoundScorer::Agreement { predicate: self.entailment.name().to_string() },
            other => return Err(DecodeError::Config(format!("{other} is not a reranking method"))),
        };
        let mut trace = SummaryTrace::new(document_id, cfg.method);
        let prompt = cfg.render_prompt(article);
        let want_logprobs = scorer == RoundScorer::MeanLogprob;
        let responses = match self.draw_responses(document_id, &prompt, cfg, want_logprobs) {
            Ok(r) => r,
            Err(e) => return Err(run_error(e, trace)),
        };
        let candidates: Vec<SampleCandidate> = responses
            .into_iter()
            .map(|r| SampleCandidate {
                tokens: word_tokens(&r.text),
                text: r.text,
                ended: r.ended,
                token_logprobs: r.token_logprobs,
            })
            .collect();
        let filtered: Vec<bool> = candidates
            .iter()
            .map(|c| match scorer {
                RoundScorer::MeanLogprob => c.token_logprobs.as_ref().is_none_or(Vec::is_empty),
                _ => false,
            })
            .collect();
        let scores = match score_candidates(&scorer, &candidates, &filtered, Some(self.entailment)) {
            Ok(s) => s,
            Err(e) => return Err(scorer_error(e, trace)),
        };
        let chosen = select(&scorer, &scores, &filtered);
        let any_ended = candidates.iter().any(|c| c.ended);
        let winner = chosen.map(|c| (candidates[c].text.clone(), candidates[c].ended));
        trace.rounds.push(RoundTrace {
            round_index: 0,
            scorer,
            candidates: candidates
                .into_iter()
                .zip(scores.into_iter().zip(filtered))
                .map(|(candidate, (score, filtered))| ScoredSample { candidate, score, filtered })
                .collect(),
            chosen,
            any_ended,
        });
        match winner {
            Some((text, ended)) => self.finish_with_response(&mut trace, &text, ended, cfg),
            None => trace.stop_reason = StopReason::AbortedAllFiltered,
        }
        Ok(trace)
    }

    /// Greedy, nucleus or beam decoding of one complete response.
    pub fn baseline(&self, document_id: &str, article: &str, cfg: &GenerationConfig) -> Result<SummaryTrace, DecodeError> {
        cfg.validate()?;
        let mut trace = SummaryTrace::new(document_id, cfg.method);
        let prompt = cfg.render_prompt(article);
        let max_tokens = cfg.response_tokens();
        let result = match cfg.method {
            Method::Greedy => match self.backend.as_distribution() {
                Some(dist) => Ok(backend::greedy_decode(dist, &prompt, max_tokens)),
                None if self.backend.supports_greedy() => {
                    let mut req = self.request(document_id, &prompt, cfg, 0, 0, max_tokens);
                    req.temperature = 0.0;
                    backend::complete(self.backend, &req)
                }
                None => {
                    return Err(DecodeError::Config(format!(
                        "backend {} cannot decode greedily",
                        self.backend.name()
                    )))
                }
            },
            Method::Nucleus => {
                let req = self.request(document_id, &prompt, cfg, 0, 0, max_tokens);
                backend::complete(self.backend, &req)
            }
            Method::Beam => match self.backend.as_distribution() {
                Some(dist) => Ok(backend::beam_search(dist, &prompt, cfg.beams, max_tokens)),
                None => {
                    return Err(DecodeError::Config(format!(
                        "beam search needs a distribution backend; {} only samples",
                        self.backend.name()
                    )))
                }
            },
            other => return Err(DecodeError::Config(format!("{other} is not a baseline method"))),
        };
        let result = match result {
            Ok(r) => r,
            Err(e) => return Err(run_error(e, trace)),
        };
        let candidate = SampleCandidate {
            tokens: word_tokens(&result.text),
            text: result.text.clone(),
            ended: result.ended,
            token_logprobs: result.token_logprobs,
        };
        trace.rounds.push(RoundTrace {
            round_index: 0,
            scorer: RoundScorer::Single,
            candidates: vec![ScoredSample { candidate, score: 0.0, filtered: false }],
            chosen: Some(0),
            any_ended: result.ended,
        });
        self.finish_with_response(&mut trace, &result.text, result.ended, cfg);
        Ok(trace)
    }

    fn finish_with_response(&self, trace: &mut SummaryTrace, text: &str, ended: bool, cfg: &GenerationConfig) {
        let spans = self.segmenter.split(text);
        let truncated = spans.len() > cfg.max_sentences;
        trace.sentences = spans.into_iter().take(cfg.max_sentences).map(|s| s.text).collect();
        trace.stop_reason = if ended && !truncated { StopReason::SampleEnded } else { StopReason::MaxSentences };
    }
}

/// Keeps only the first sentence of a completion. The result counts as ended
/// only if the backend stopped and nothing followed that sentence.
pub fn first_sentence(segmenter: &dyn Segmenter, result: &CompletionResult) -> SampleCandidate {
    let spans = segmenter.split(&result.text);
    let text = spans.first().map(|s| s.text.clone()).unwrap_or_default();
    SampleCandidate::new(text, result.ended && spans.len() <= 1)
}

/// Recomputes a persisted round's scores and winner from its candidates and
/// recorded filter flags.
pub fn rescore_round(
    round: &RoundTrace,
    predicate: Option<&dyn EntailmentPredicate>,
) -> Result<(Vec<f64>, Option<usize>), ScoringError> {
    let candidates: Vec<SampleCandidate> = round.candidates.iter().map(|c| c.candidate.clone()).collect();
    let filtered: Vec<bool> = round.candidates.iter().map(|c| c.filtered).collect();
    let scores = score_candidates(&round.scorer, &candidates, &filtered, predicate)?;
    let chosen = match round.scorer {
        RoundScorer::Single => (!candidates.is_empty()).then_some(0),
        _ => select(&round.scorer, &scores, &filtered),
    };
    Ok((scores, chosen))
}
