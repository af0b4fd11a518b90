//! Grammaticality filter: a sentence passes when its parse contains both a
//! subject and a finite verb.
//!
//! Parses come from a [`ParseProvider`]. Three providers ship here: an offline
//! word-list heuristic, a scripted table for tests, and an HTTP client for the
//! parse service that falls back to the heuristic whenever the service fails.

use std::collections::HashMap;

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::http::{self, HttpSettings, PostFailure};

/// Dependency labels that mark a subject.
pub const SUBJECT_DEPS: &[&str] = &["nsubj", "nsubjpass", "expl"];
/// Part-of-speech tags that mark a finite verb.
pub const FINITE_VERB_TAGS: &[&str] = &["VBZ", "VBD", "VBP"];
/// Dependency labels that mark an auxiliary verb.
pub const AUX_DEPS: &[&str] = &["aux", "auxpass"];

/// One word of a parsed sentence: Penn Treebank tag plus dependency label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseToken {
    #[serde(rename = "text")]
    pub surface: String,
    pub pos: String,
    pub dep: String,
}

impl ParseToken {
    pub fn new(surface: impl Into<String>, pos: impl Into<String>, dep: impl Into<String>) -> Self {
        Self {
            surface: surface.into(),
            pos: pos.into(),
            dep: dep.into(),
        }
    }

    fn is_well_formed(&self) -> bool {
        let tag_ok = |t: &str| !t.is_empty() && !t.chars().any(char::is_whitespace);
        !self.surface.is_empty() && tag_ok(&self.pos) && tag_ok(&self.dep)
    }
}

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("parse service unreachable: {0}")]
    Retryable(String),
    #[error("parse service protocol violation: {0}")]
    Protocol(String),
    #[error("no scripted parse for sentence {0:?}")]
    Unscripted(String),
}

/// Source of per-word tags for the grammaticality check.
pub trait ParseProvider: Send + Sync {
    fn name(&self) -> &str;
    /// Whether parsing goes over the network.
    fn remote(&self) -> bool {
        false
    }
    fn parse(&self, sentence: &str) -> Result<Vec<ParseToken>, GrammarError>;
}

/// True iff some token carries a subject dependency and some token is a
/// finite verb (by tag) or an auxiliary (by dependency).
pub fn is_grammatical(parse: &[ParseToken]) -> bool {
    let has_subject = parse.iter().any(|t| SUBJECT_DEPS.contains(&t.dep.as_str()));
    let has_verb = parse.iter().any(|t| {
        FINITE_VERB_TAGS.contains(&t.pos.as_str()) || AUX_DEPS.contains(&t.dep.as_str())
    });
    has_subject && has_verb
}

/// Runs the provider and the check; a failed parse counts as ungrammatical.
pub fn check_sentence(provider: &dyn ParseProvider, sentence: &str) -> bool {
    match provider.parse(sentence) {
        Ok(tokens) => is_grammatical(&tokens),
        Err(e) => {
            log::warn!("{}: treating unparseable sentence as ungrammatical: {e}", provider.name());
            false
        }
    }
}

const PRONOUN_SUBJECTS: &[&str] = &["i", "you", "he", "she", "it", "we", "they", "who"];
const THIRD_PERSON: &[&str] = &["he", "she", "it", "who"];
const DETERMINERS: &[&str] = &[
    "the", "a", "an", "this", "that", "these", "those", "my", "your", "his", "her", "its", "our",
    "their", "some", "every", "each", "no",
];
const PREPOSITIONS: &[&str] = &[
    "in", "on", "at", "of", "for", "with", "by", "from", "to", "into", "over", "under", "after",
    "before", "about", "during", "without", "through", "between", "among", "against", "across",
    "behind", "beyond", "since", "until", "within", "near", "and", "or", "but",
];
const FINITE_AUX: &[(&str, &str)] = &[
    ("is", "VBZ"),
    ("are", "VBP"),
    ("was", "VBD"),
    ("were", "VBD"),
    ("has", "VBZ"),
    ("have", "VBP"),
    ("had", "VBD"),
    ("does", "VBZ"),
    ("do", "VBP"),
    ("did", "VBD"),
];

const MODALS: &[&str] = &["can", "could", "will", "would", "shall", "should", "may", "might", "must"];
const IRREGULAR_PAST: &[&str] = &[
    "ate", "became", "began", "bought", "brought", "built", "came", "caught", "chose", "drew",
    "drove", "fell", "felt", "flew", "found", "gave", "got", "grew", "held", "kept", "knew", "led",
    "left", "lost", "made", "meant", "met", "paid", "ran", "rose", "said", "sang", "sat", "saw",
    "sent", "sold", "spent", "spoke", "stood", "struck", "swam", "taught", "thought", "threw",
    "told", "took", "went", "won", "wore", "wrote",
];

/// Offline tagger built from closed word lists and suffix rules.
///
/// * personal pronouns become `PRP`/`nsubj`, "there" becomes `EX`/`expl`;
/// * the finite forms of be/have/do get `VBZ`/`VBP`/`VBD`, modals get
///   `MD`/`aux`;
/// * a word ending in "-ed" or on a short list of irregular past forms gets
///   `VBD`; a word ending in "-s" gets `VBZ` when
///   the word before it is a likely subject;
/// * a likely subject is a subject pronoun, or a non-function word that
///   follows a determiner or is capitalized at sentence start. When a verb is
///   found and no subject has been tagged yet, the word directly before the
///   verb is promoted to `nsubj` if it is a likely subject;
/// * determiners get `DT`/`det`, everything else `X`/`dep`.
pub fn heuristic_parse(sentence: &str) -> Vec<ParseToken> {
    let words: Vec<&str> = sentence
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
        .collect();
    let lower: Vec<String> = words.iter().map(|w| w.to_lowercase()).collect();
    let mut tokens: Vec<ParseToken> = Vec::with_capacity(words.len());
    let mut has_subject = false;

    let is_function_word = |w: &str| {
        DETERMINERS.contains(&w)
            || PREPOSITIONS.contains(&w)
            || FINITE_AUX.iter().any(|(a, _)| *a == w)
            || MODALS.contains(&w)
            || w == "there"
    };
    let likely_subject = |i: usize| -> bool {
        let w = lower[i].as_str();
        if PRONOUN_SUBJECTS.contains(&w) {
            return true;
        }
        if is_function_word(w) {
            return false;
        }
        let after_det = i > 0 && DETERMINERS.contains(&lower[i - 1].as_str());
        let capitalized_first = i == 0 && words[0].chars().next().is_some_and(char::is_uppercase);
        after_det || capitalized_first
    };

    for (i, (word, w)) in words.iter().zip(&lower).enumerate() {
        let w = w.as_str();
        let finite = FINITE_AUX.iter().find(|(a, _)| *a == w).map(|(_, tag)| *tag);
        let verb_tag = if let Some(tag) = finite {
            Some(tag)
        } else if MODALS.contains(&w) {
            Some("MD")
        } else if i > 0
            && (IRREGULAR_PAST.contains(&w) || (w.len() > 3 && w.ends_with("ed") && !is_function_word(w)))
        {
            Some("VBD")
        } else if i > 0
            && w.len() > 2
            && w.ends_with('s')
            && !w.ends_with("ss")
            && !is_function_word(w)
            && likely_subject(i - 1)
            && (!PRONOUN_SUBJECTS.contains(&lower[i - 1].as_str())
                || THIRD_PERSON.contains(&lower[i - 1].as_str()))
        {
            Some("VBZ")
        } else {
            None
        };

        let token = if let Some(tag) = verb_tag {
            if !has_subject && i > 0 && likely_subject(i - 1) {
                let prev = &mut tokens[i - 1];
                prev.dep = "nsubj".into();
                has_subject = true;
            }
            ParseToken::new(*word, tag, if tag == "MD" { "aux" } else { "ROOT" })
        } else if PRONOUN_SUBJECTS.contains(&w) {
            has_subject = true;
            ParseToken::new(*word, "PRP", "nsubj")
        } else if w == "there" {
            has_subject = true;
            ParseToken::new(*word, "EX", "expl")
        } else if DETERMINERS.contains(&w) {
            ParseToken::new(*word, "DT", "det")
        } else {
            ParseToken::new(*word, "X", "dep")
        };
        tokens.push(token);
    }
    tokens
}

/// Provider backed by [`heuristic_parse`].
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicParser;

impl ParseProvider for HeuristicParser {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn remote(&self) -> bool {
        false
    }

    fn parse(&self, sentence: &str) -> Result<Vec<ParseToken>, GrammarError> {
        Ok(heuristic_parse(sentence))
    }
}

/// Fixed sentence-to-parse table; unknown sentences are an error.
#[derive(Debug, Clone, Default)]
pub struct ScriptedParser {
    parses: HashMap<String, Vec<ParseToken>>,
}

impl ScriptedParser {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, sentence: impl Into<String>, parse: Vec<ParseToken>) -> Self {
        self.insert(sentence, parse);
        self
    }

    pub fn insert(&mut self, sentence: impl Into<String>, parse: Vec<ParseToken>) {
        self.parses.insert(sentence.into(), parse);
    }
}

impl ParseProvider for ScriptedParser {
    fn name(&self) -> &str {
        "scripted"
    }

    fn remote(&self) -> bool {
        false
    }

    fn parse(&self, sentence: &str) -> Result<Vec<ParseToken>, GrammarError> {
        self.parses
            .get(sentence)
            .cloned()
            .ok_or_else(|| GrammarError::Unscripted(sentence.to_string()))
    }
}

#[derive(Deserialize)]
struct ParseReply {
    tokens: Vec<ParseToken>,
}

/// Client for the `/parse` endpoint of the parse service.
#[derive(Debug, Clone)]
pub struct RemoteParser {
    base_url: String,
    client: Client,
    settings: HttpSettings,
}

impl RemoteParser {
    pub fn new(base_url: impl Into<String>, settings: HttpSettings) -> Self {
        Self {
            base_url: base_url.into(),
            client: http::build_client(&settings),
            settings,
        }
    }

    /// Calls the service once with no fallback.
    pub fn remote_parse(&self, sentence: &str) -> Result<Vec<ParseToken>, GrammarError> {
        let url = http::endpoint(&self.base_url, "/parse");
        let body = json!({ "sentence": sentence });
        let value = http::post_json_once(&self.client, &url, &body, self.settings.bearer_token.as_deref())
            .map_err(|e| match e {
                PostFailure::Transport(msg) => GrammarError::Retryable(msg),
                status @ PostFailure::Status { .. } => GrammarError::Retryable(status.to_string()),
            })?;
        decode_parse_reply(sentence, value)
    }
}

fn decode_parse_reply(sentence: &str, value: serde_json::Value) -> Result<Vec<ParseToken>, GrammarError> {
    let reply: ParseReply =
        serde_json::from_value(value).map_err(|e| GrammarError::Protocol(e.to_string()))?;
    if reply.tokens.is_empty() && !sentence.trim().is_empty() {
        return Err(GrammarError::Protocol("empty token list for a non-empty sentence".into()));
    }
    if let Some(bad) = reply.tokens.iter().find(|t| !t.is_well_formed()) {
        return Err(GrammarError::Protocol(format!("malformed token {bad:?}")));
    }
    Ok(reply.tokens)
}

/// One-shot call to a parse service at `endpoint`.
pub fn remote_parse(sentence: &str, endpoint: &str) -> Result<Vec<ParseToken>, GrammarError> {
    RemoteParser::new(endpoint, HttpSettings::default()).remote_parse(sentence)
}

impl ParseProvider for RemoteParser {
    fn name(&self) -> &str {
        "remote"
    }

    fn remote(&self) -> bool {
        true
    }

    fn parse(&self, sentence: &str) -> Result<Vec<ParseToken>, GrammarError> {
        match self.remote_parse(sentence) {
            Ok(tokens) => Ok(tokens),
            Err(e) => {
                log::warn!("parse service failed ({e}); using heuristic parse");
                Ok(heuristic_parse(sentence))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tok(s: &str, pos: &str, dep: &str) -> ParseToken {
        ParseToken::new(s, pos, dep)
    }

    #[test]
    fn subject_and_verb_required() {
        let cat = [tok("the", "DT", "det"), tok("cat", "NN", "nsubj"), tok("runs", "VBZ", "ROOT")];
        assert!(is_grammatical(&cat));
        let fragment = [tok("in", "IN", "prep"), tok("the", "DT", "det"), tok("park", "NN", "pobj")];
        assert!(!is_grammatical(&fragment));
        assert!(!is_grammatical(&[]));
        let expl = [tok("there", "EX", "expl"), tok("were", "VBD", "ROOT"), tok("delays", "NNS", "attr")];
        assert!(is_grammatical(&expl));
    }

    #[test]
    fn auxiliary_dependency_counts_as_verb() {
        let parse = [tok("it", "PRP", "nsubjpass"), tok("will", "MD", "aux"), tok("be", "VB", "auxpass")];
        assert!(is_grammatical(&parse));
        let no_subject = [tok("will", "MD", "aux"), tok("go", "VB", "ROOT")];
        assert!(!is_grammatical(&no_subject));
    }

    #[test]
    fn heuristic_examples() {
        let parse = heuristic_parse("She runs daily.");
        assert!(parse.iter().any(|t| t.dep == "nsubj"));
        assert!(parse.iter().any(|t| t.pos == "VBZ"));
        assert!(is_grammatical(&parse));

        let parse = heuristic_parse("Running in the park.");
        assert!(!parse.iter().any(|t| t.dep == "nsubj"));
        assert!(!is_grammatical(&parse));

        assert!(heuristic_parse("").is_empty());
    }

    #[test]
    fn heuristic_noun_subjects() {
        for s in [
            "The cat runs.",
            "The company reported record profits.",
            "Paris is the capital.",
            "There were delays.",
            "Officials said the bridge was closed.",
            "The team won the final.",
            "She will return.",
        ] {
            assert!(is_grammatical(&heuristic_parse(s)), "{s}");
        }
        for s in ["After the storm.", "The big red house.", "Between friends and rivals."] {
            assert!(!is_grammatical(&heuristic_parse(s)), "{s}");
        }
    }

    #[test]
    fn scripted_parser_unknown_is_error() {
        let parser = ScriptedParser::new().with("x", vec![tok("x", "X", "dep")]);
        assert_eq!(parser.parse("x").unwrap().len(), 1);
        assert!(matches!(parser.parse("y"), Err(GrammarError::Unscripted(_))));
        assert!(!check_sentence(&parser, "y"));
    }

    #[test]
    fn reply_validation() {
        let ok = serde_json::json!({"tokens": [{"text": "Hi", "pos": "UH", "dep": "ROOT"}]});
        assert_eq!(decode_parse_reply("Hi", ok).unwrap().len(), 1);
        let missing_dep = serde_json::json!({"tokens": [{"text": "Hi", "pos": "UH"}]});
        assert!(matches!(decode_parse_reply("Hi", missing_dep), Err(GrammarError::Protocol(_))));
        let empty = serde_json::json!({"tokens": []});
        assert!(matches!(decode_parse_reply("Hi", empty.clone()), Err(GrammarError::Protocol(_))));
        assert!(decode_parse_reply("", empty).unwrap().is_empty());
    }

    fn arb_token() -> impl Strategy<Value = ParseToken> {
        let pos = prop::sample::select(vec!["VBZ", "VBD", "VBP", "NN", "DT", "IN", "MD", "VB"]);
        let dep = prop::sample::select(vec!["nsubj", "nsubjpass", "expl", "aux", "auxpass", "det", "ROOT", "dobj"]);
        ("[a-z]{1,5}", pos, dep).prop_map(|(s, p, d)| ParseToken::new(s, p, d))
    }

    proptest! {
        #[test]
        fn monotone_in_evidence(mut parse in prop::collection::vec(arb_token(), 0..8), extra in arb_token(), at in 0usize..8) {
            let before = is_grammatical(&parse);
            let at = at.min(parse.len());
            parse.insert(at, extra);
            prop_assert!(!before || is_grammatical(&parse));
        }

        #[test]
        fn ignores_surface_and_order(parse in prop::collection::vec(arb_token(), 0..8), seed in any::<u64>()) {
            let mut shuffled: Vec<ParseToken> = parse
                .iter()
                .map(|t| ParseToken::new("w", t.pos.clone(), t.dep.clone()))
                .collect();
            let len = shuffled.len();
            if len > 1 {
                shuffled.rotate_left((seed as usize) % len);
            }
            prop_assert_eq!(is_grammatical(&parse), is_grammatical(&shuffled));
        }
    }
}
