//! Batch runs over line-delimited JSON datasets, and trace replay.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    synthetic_hallucination_backend, Fact, FactTable, MarkovBackend, RemoteBackend, SamplingBackend,
    ScriptedBackend,
};
use crate::decoder::{rescore_round, Decoder, GenerationConfig, Method, RoundScorer, RoundTrace, StopReason};
use crate::eval::{aggregate_report, EvalRecord, Report};
use crate::grammar::{HeuristicParser, ParseProvider, RemoteParser};
use crate::http::HttpSettings;
use crate::scoring::{EntailmentPredicate, ExactMatchPredicate, RemoteEntailment};
use crate::textproc::{clean_article, word_tokens};

/// Environment variable holding a bearer token for remote endpoints.
pub const API_KEY_ENV: &str = "SAMPLE_SELECT_API_KEY";

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl RunnerError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        RunnerError::Io { path: path.to_path_buf(), source }
    }
}

/// One input document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub article: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Remote {
        url: String,
        #[serde(default)]
        model: Option<String>,
        #[serde(default = "default_true")]
        logprobs: bool,
        #[serde(default = "default_true")]
        greedy: bool,
    },
    Synthetic {
        facts: Vec<Fact>,
        #[serde(default = "default_fidelity")]
        fidelity: f64,
        #[serde(default = "default_decoys")]
        decoys: usize,
        #[serde(default)]
        anchor: Option<String>,
    },
    Scripted {
        script: PathBuf,
    },
    Markov {
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_markov_words")]
        words: usize,
    },
}

fn default_true() -> bool {
    true
}
fn default_fidelity() -> f64 {
    0.6
}
fn default_decoys() -> usize {
    9
}
fn default_markov_words() -> usize {
    12
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Remote { url: "http://127.0.0.1:8000".into(), model: None, logprobs: true, greedy: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParserConfig {
    #[default]
    Heuristic,
    Remote { url: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EntailmentConfig {
    #[default]
    ExactMatch,
    Remote { url: String },
}

/// HTTP behaviour shared by every remote endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub timeout_secs: f64,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self { timeout_secs: 60.0, retries: 2, backoff_ms: 250 }
    }
}

impl HttpConfig {
    fn settings(&self) -> HttpSettings {
        HttpSettings {
            timeout: Duration::from_secs_f64(self.timeout_secs.max(0.001)),
            retries: self.retries,
            backoff: Duration::from_millis(self.backoff_ms),
            bearer_token: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        }
    }
}

/// Parsed TOML run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub generation: GenerationConfig,
    pub backend: BackendConfig,
    pub parser: ParserConfig,
    pub entailment: EntailmentConfig,
    pub http: HttpConfig,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            generation: GenerationConfig::default(),
            backend: BackendConfig::default(),
            parser: ParserConfig::default(),
            entailment: EntailmentConfig::default(),
            http: HttpConfig::default(),
            workers: 1,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunnerError> {
        toml::from_str(text).map_err(|e| RunnerError::Usage(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, RunnerError> {
        let text = fs::read_to_string(path)
            .map_err(|e| RunnerError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub method: Option<Method>,
    pub n: Option<usize>,
    pub top_p: Option<f64>,
    pub temperature: Option<f64>,
    pub seed: Option<u64>,
    pub backend_url: Option<String>,
    pub parse_url: Option<String>,
    pub max_sentence_tokens: Option<usize>,
    pub max_sentences: Option<usize>,
    pub prompt_template: Option<String>,
    pub workers: Option<usize>,
    pub timeout_secs: Option<f64>,
    pub retries: Option<u32>,
}

impl Overrides {
    pub fn apply(self, cfg: &mut RunConfig) {
        let g = &mut cfg.generation;
        if let Some(v) = self.method {
            g.method = v;
        }
        if let Some(v) = self.n {
            g.n = v;
        }
        if let Some(v) = self.top_p {
            g.top_p = v;
        }
        if let Some(v) = self.temperature {
            g.temperature = v;
        }
        if let Some(v) = self.seed {
            g.seed = v;
        }
        if let Some(v) = self.max_sentence_tokens {
            g.max_sentence_tokens = v;
        }
        if let Some(v) = self.max_sentences {
            g.max_sentences = v;
        }
        if let Some(v) = self.prompt_template {
            g.prompt_template = v;
        }
        if let Some(url) = self.backend_url {
            cfg.backend = match std::mem::take(&mut cfg.backend) {
                BackendConfig::Remote { model, logprobs, greedy, .. } => {
                    BackendConfig::Remote { url, model, logprobs, greedy }
                }
                _ => BackendConfig::Remote { url, model: None, logprobs: true, greedy: true },
            };
        }
        if let Some(url) = self.parse_url {
            cfg.parser = ParserConfig::Remote { url };
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = self.timeout_secs {
            cfg.http.timeout_secs = v;
        }
        if let Some(v) = self.retries {
            cfg.http.retries = v;
        }
    }
}

/// Resolved backends plus generation settings, ready to process documents.
pub struct Pipeline {
    pub generation: GenerationConfig,
    backend: Box<dyn SamplingBackend>,
    parser: Box<dyn ParseProvider>,
    entailment: Box<dyn EntailmentPredicate>,
    workers: usize,
}

impl Pipeline {
    pub fn from_config(cfg: &RunConfig) -> Result<Self, RunnerError> {
        cfg.generation.validate().map_err(|e| RunnerError::Usage(e.to_string()))?;
        let settings = cfg.http.settings();
        let backend: Box<dyn SamplingBackend> = match &cfg.backend {
            BackendConfig::Remote { url, model, logprobs, greedy } => {
                let mut b = RemoteBackend::new(url.clone(), settings.clone()).with_capabilities(*logprobs, *greedy);
                if let Some(m) = model {
                    b = b.with_model(m.clone());
                }
                Box::new(b)
            }
            BackendConfig::Synthetic { facts, fidelity, decoys, anchor } => {
                let mut b = synthetic_hallucination_backend(FactTable::new(facts.clone()), *fidelity, *decoys, cfg.generation.seed)
                    .map_err(|e| RunnerError::Usage(e.to_string()))?;
                if let Some(a) = anchor {
                    b = b.with_anchor(a.clone());
                }
                Box::new(b)
            }
            BackendConfig::Scripted { script } => Box::new(
                ScriptedBackend::load(cfg.generation.seed, script).map_err(|e| RunnerError::Usage(e.to_string()))?,
            ),
            BackendConfig::Markov { seed, words } => Box::new(MarkovBackend::random(*seed, *words)),
        };
        let parser: Box<dyn ParseProvider> = match &cfg.parser {
            ParserConfig::Heuristic => Box::new(HeuristicParser),
            ParserConfig::Remote { url } => Box::new(RemoteParser::new(url.clone(), settings.clone())),
        };
        let entailment: Box<dyn EntailmentPredicate> = match &cfg.entailment {
            EntailmentConfig::ExactMatch => Box::new(ExactMatchPredicate),
            EntailmentConfig::Remote { url } => Box::new(RemoteEntailment::new(url.clone(), settings)),
        };
        Ok(Self { generation: cfg.generation.clone(), backend, parser, entailment, workers: cfg.workers.max(1) })
    }

    fn decoder(&self) -> Decoder<'_> {
        Decoder::new(self.backend.as_ref(), self.parser.as_ref()).with_entailment(self.entailment.as_ref())
    }

    /// Cleans, decodes and evaluates one document. Failures become an
    /// output line carrying `error` and whatever rounds completed.
    pub fn process(&self, record: &DatasetRecord) -> OutputLine {
        let article = clean_article(&record.article);
        let method = self.generation.method;
        match self.decoder().decode(&record.id, &article, &self.generation) {
            Ok(trace) => {
                let summary = trace.summary(&self.generation.joiner);
                let eval = EvalRecord::evaluate(&record.id, method, &summary, record.reference.as_deref(), trace.stop_reason);
                OutputLine {
                    id: record.id.clone(),
                    method,
                    summary: Some(summary),
                    stop_reason: trace.stop_reason,
                    rounds: trace.rounds,
                    eval: Some(eval),
                    error: None,
                }
            }
            Err(e) => {
                log::error!("document {}: {e}", record.id);
                let rounds = e.partial().map(|t| t.rounds.clone()).unwrap_or_default();
                OutputLine {
                    id: record.id.clone(),
                    method,
                    summary: None,
                    stop_reason: StopReason::Failed,
                    rounds,
                    eval: None,
                    error: Some(e.to_string()),
                }
            }
        }
    }
}

/// One line of run output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputLine {
    pub id: String,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    pub stop_reason: StopReason,
    pub rounds: Vec<RoundTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Report file contents: the aggregate plus a timestamp header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub generated_at: String,
    #[serde(flatten)]
    pub report: Report,
    pub n_failed: usize,
}

/// Reads and validates a dataset: unique ids, non-empty articles.
pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>, RunnerError> {
    let file = File::open(path).map_err(|e| RunnerError::Usage(format!("cannot read dataset {}: {e}", path.display())))?;
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| RunnerError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord = serde_json::from_str(&line)
            .map_err(|e| RunnerError::Usage(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        if record.article.trim().is_empty() {
            return Err(RunnerError::Usage(format!("{}:{}: empty article", path.display(), lineno + 1)));
        }
        if !seen.insert(record.id.clone()) {
            return Err(RunnerError::Usage(format!("duplicate document id {:?}", record.id)));
        }
        records.push(record);
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub documents: usize,
    pub failed: usize,
    pub report: ReportFile,
}

/// Processes every record, writing output lines in completion order and the
/// aggregate report at the end.
pub fn run(
    records: &[DatasetRecord],
    pipeline: &Pipeline,
    output_path: &Path,
    report_path: &Path,
) -> Result<RunSummary, RunnerError> {
    let out = File::create(output_path).map_err(|e| RunnerError::io(output_path, e))?;
    let writer = Mutex::new(BufWriter::new(out));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(pipeline.workers)
        .build()
        .map_err(|e| RunnerError::Usage(format!("cannot start workers: {e}")))?;

    let results: Vec<Result<OutputLine, RunnerError>> = pool.install(|| {
        let process = |record: &DatasetRecord| {
            let line = pipeline.process(record);
            let json = serde_json::to_string(&line).expect("output lines serialize");
            let mut w = writer.lock().unwrap_or_else(|p| p.into_inner());
            writeln!(w, "{json}").map_err(|e| RunnerError::io(output_path, e))?;
            Ok(line)
        };
        if pipeline.workers == 1 {
            records.iter().map(process).collect()
        } else {
            records.par_iter().map(process).collect()
        }
    });
    writer
        .into_inner()
        .unwrap_or_else(|p| p.into_inner())
        .flush()
        .map_err(|e| RunnerError::io(output_path, e))?;

    let mut evals = Vec::new();
    let mut failed = 0;
    for r in results {
        let line = r?;
        match line.eval {
            Some(e) => evals.push(e),
            None => failed += 1,
        }
    }
    let report = match aggregate_report(&evals) {
        Ok(mut reports) => reports.remove(0),
        Err(_) => Report {
            method: pipeline.generation.method,
            n_docs: 0,
            rouge1_f1_mean: None,
            rouge1_f1_count: 0,
            length_mean: 0.0,
            stop_reasons: Default::default(),
        },
    };
    let report = ReportFile {
        generated_at: chrono::Utc::now().to_rfc3339(),
        report,
        n_failed: failed,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(report_path, json + "\n").map_err(|e| RunnerError::io(report_path, e))?;
    Ok(RunSummary { documents: records.len(), failed, report })
}

/// Result of re-checking a trace file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayReport {
    pub lines: usize,
    pub rounds_checked: usize,
    pub rounds_skipped: usize,
    pub mismatches: Vec<String>,
}

fn check_round(id: &str, round: &RoundTrace, report: &mut ReplayReport) {
    let predicate: Option<Box<dyn EntailmentPredicate>> = match &round.scorer {
        RoundScorer::Agreement { predicate } if predicate == ExactMatchPredicate.name() => Some(Box::new(ExactMatchPredicate)),
        RoundScorer::Agreement { predicate } => {
            log::warn!("{id} round {}: cannot re-run entailment predicate {predicate:?}; skipped", round.round_index);
            report.rounds_skipped += 1;
            return;
        }
        _ => None,
    };
    report.rounds_checked += 1;
    let at = format!("{id} round {}", round.round_index);
    for (i, c) in round.candidates.iter().enumerate() {
        if word_tokens(&c.candidate.text) != c.candidate.tokens {
            report.mismatches.push(format!("{at} candidate {i}: tokens do not match text"));
        }
    }
    match rescore_round(round, predicate.as_deref()) {
        Ok((scores, chosen)) => {
            for (i, (c, s)) in round.candidates.iter().zip(&scores).enumerate() {
                if c.score != *s {
                    report.mismatches.push(format!("{at} candidate {i}: recorded score {} but rescored {s}", c.score));
                }
            }
            if chosen != round.chosen {
                report.mismatches.push(format!("{at}: recorded choice {:?} but rescored {chosen:?}", round.chosen));
            }
        }
        Err(e) => report.mismatches.push(format!("{at}: cannot rescore: {e}")),
    }
}

/// Rescores every round of a run output file.
pub fn replay(trace_path: &Path) -> Result<ReplayReport, RunnerError> {
    let file = File::open(trace_path).map_err(|e| RunnerError::Usage(format!("cannot read trace {}: {e}", trace_path.display())))?;
    let mut report = ReplayReport::default();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| RunnerError::io(trace_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: OutputLine = serde_json::from_str(&line)
            .map_err(|e| RunnerError::Usage(format!("{}:{}: malformed trace line: {e}", trace_path.display(), lineno + 1)))?;
        report.lines += 1;
        for round in &parsed.rounds {
            check_round(&parsed.id, round, &mut report);
        }
    }
    if report.lines == 0 {
        return Err(RunnerError::Usage(format!("trace {} is empty", trace_path.display())));
    }
    Ok(report)
}
