//! Text utilities shared by the decoders: article cleanup, rule-based
//! sentence segmentation and word-token normalization.

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Social-media button text that leaks into scraped news articles.
pub const SHARE_BOILERPLATE: &str = "Share this with Email Facebook Messenger Messenger Twitter Pinterest Whats App Linked In Copy this link";

/// Abbreviations whose final period never ends a sentence.
pub const ABBREVIATIONS: &[&str] = &[
    "Mr.", "Mrs.", "Ms.", "Dr.", "Prof.", "St.", "Jr.", "Sr.", "U.S.", "U.K.", "No.", "vs.", "etc.",
    "e.g.", "i.e.",
];

fn period_before_letter() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\.([a-zA-Z])").expect("static pattern"))
}

fn lower_then_upper() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"([a-z])([A-Z])").expect("static pattern"))
}

/// Repairs run-together text in scraped articles.
///
/// Three substitutions run once, in order: a space is inserted after a
/// period that is directly followed by a letter, a space is inserted between
/// a lowercase letter and a following uppercase letter, and the share-button
/// boilerplate is removed. Only applied to prompt input, never to text that
/// is scored against references.
pub fn clean_article(text: &str) -> String {
    let spaced = period_before_letter().replace_all(text, ". $1");
    let split = lower_then_upper().replace_all(&spaced, "$1 $2");
    split.replace(SHARE_BOILERPLATE, "")
}

/// One sentence of a source text. Offsets count `char`s, not bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Splits text into sentences.
pub trait Segmenter: Send + Sync {
    fn split(&self, text: &str) -> Vec<SentenceSpan>;
}

/// Punctuation-and-capitalization segmenter with a closed abbreviation list.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleSegmenter;

impl Segmenter for RuleSegmenter {
    fn split(&self, text: &str) -> Vec<SentenceSpan> {
        split_sentences(text)
    }
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
}

/// Splits at `.`, `!` or `?` (plus any closing quotes or brackets) when the
/// next non-space character is uppercase or the text ends there. A period
/// that completes one of [`ABBREVIATIONS`] never splits. Text after the last
/// terminator becomes a final span.
pub fn split_sentences(text: &str) -> Vec<SentenceSpan> {
    let chars: Vec<char> = text.chars().collect();
    let mut spans = Vec::new();
    let mut seg_start = 0;
    let mut i = 0;
    while i < chars.len() {
        if !is_terminator(chars[i]) {
            i += 1;
            continue;
        }
        let term_start = i;
        let mut end = i;
        while end < chars.len() && is_terminator(chars[end]) {
            end += 1;
        }
        while end < chars.len() && is_closer(chars[end]) {
            end += 1;
        }
        let mut next = end;
        while next < chars.len() && chars[next].is_whitespace() {
            next += 1;
        }
        let boundary = if next == chars.len() {
            true
        } else {
            next > end && chars[next].is_uppercase()
        };
        if boundary && !ends_abbreviation(&chars, seg_start, term_start, end) {
            push_span(&chars, seg_start, end, &mut spans);
            seg_start = end;
        }
        i = end.max(i + 1);
    }
    push_span(&chars, seg_start, chars.len(), &mut spans);
    spans
}

fn ends_abbreviation(chars: &[char], seg_start: usize, term_start: usize, term_end: usize) -> bool {
    // Only a single trailing period can close an abbreviation.
    if chars[term_start] != '.' || (term_end - term_start > 1 && is_terminator(chars[term_start + 1])) {
        return false;
    }
    let mut word_start = term_start;
    while word_start > seg_start && !chars[word_start - 1].is_whitespace() {
        word_start -= 1;
    }
    let word: String = chars[word_start..=term_start].iter().collect();
    let word = word.trim_start_matches(['(', '"', '\'', '[']);
    ABBREVIATIONS.contains(&word)
}

fn push_span(chars: &[char], from: usize, to: usize, spans: &mut Vec<SentenceSpan>) {
    let mut start = from;
    let mut end = to;
    while start < end && chars[start].is_whitespace() {
        start += 1;
    }
    while end > start && chars[end - 1].is_whitespace() {
        end -= 1;
    }
    if start < end {
        spans.push(SentenceSpan {
            text: chars[start..end].iter().collect(),
            start,
            end,
        });
    }
}

/// A case-folded word with edge punctuation removed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WordToken(String);

impl WordToken {
    /// Normalizes one whitespace-free piece; `None` when nothing alphanumeric remains.
    pub fn normalize(piece: &str) -> Option<Self> {
        let folded = piece.to_lowercase();
        let trimmed = folded.trim_matches(|c: char| !c.is_alphanumeric());
        (!trimmed.is_empty()).then(|| WordToken(trimmed.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl AsRef<str> for WordToken {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for WordToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Whitespace tokenization with case folding and edge-punctuation stripping.
/// Order and duplicates are preserved.
pub fn word_tokens(sentence: &str) -> Vec<WordToken> {
    sentence.split_whitespace().filter_map(WordToken::normalize).collect()
}

/// Convenience wrapper returning plain strings.
pub fn word_token_strings(sentence: &str) -> Vec<String> {
    word_tokens(sentence).into_iter().map(|t| t.0).collect()
}
