//! Sentence-level Sample & Select decoding for abstractive summarization.
//!
//! Each round draws `n` one-sentence continuations, drops ungrammatical
//! ones, and keeps the sample whose words are most shared by the others.
//! The chosen sentence is appended to the prompt and the loop repeats until
//! the chosen sample ends the document.

pub mod backend;
pub mod decoder;
pub mod eval;
pub mod grammar;
pub mod http;
pub mod runner;
pub mod scoring;
pub mod textproc;

pub use backend::{CompletionRequest, CompletionResult, SamplingBackend};
pub use decoder::{Decoder, DecodeError, GenerationConfig, Method, StopReason, SummaryTrace};
pub use eval::{rouge1_f1, EvalRecord, Report};
pub use scoring::{overlap_score, unigram_nll_score};
pub use textproc::{clean_article, split_sentences};
