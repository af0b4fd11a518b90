mod common;

use serde_json::json;

use common::{dead_url, fast_settings, MockServer};
use sample_select::backend::{BackendError, CompletionRequest, RemoteBackend, SamplingBackend};
use sample_select::grammar::{check_sentence, GrammarError, ParseProvider, RemoteParser};
use sample_select::scoring::{agreement_score, EntailmentPredicate, RemoteEntailment, ScoringError};

#[test]
fn completion_request_and_reply() {
    let server = MockServer::start(|_| {
        (200, json!({"text": "It rained.", "finish_reason": "stop", "token_logprobs": [-0.5, -0.25]}).to_string())
    });
    let mut settings = fast_settings(0);
    settings.bearer_token = Some("k".into());
    let backend = RemoteBackend::new(&server.url, settings).with_model("tiny");
    let mut req = CompletionRequest::new("Prompt", 12);
    req.seed = Some(7);
    req.want_logprobs = true;
    let r = backend.complete(&req).unwrap();
    assert_eq!(r.text, "It rained.");
    assert!(r.ended);
    assert_eq!(r.token_logprobs, Some(vec![-0.5, -0.25]));

    let seen = &server.seen()[0];
    assert_eq!(seen.path, "/v1/completions");
    assert_eq!(seen.authorization.as_deref(), Some("Bearer k"));
    assert_eq!(seen.body["prompt"], "Prompt");
    assert_eq!(seen.body["max_tokens"], 12);
    assert_eq!(seen.body["seed"], 7);
    assert_eq!(seen.body["model"], "tiny");
    assert_eq!(seen.body["logprobs"], true);
}

#[test]
fn length_finish_is_not_ended() {
    let server = MockServer::start(|_| (200, json!({"text": "It rai", "finish_reason": "length"}).to_string()));
    let backend = RemoteBackend::new(&server.url, fast_settings(0));
    assert!(!backend.complete(&CompletionRequest::new("p", 2)).unwrap().ended);
}

#[test]
fn server_errors_are_retried_then_fail() {
    let server = MockServer::start(|_| (500, "{}".into()));
    let backend = RemoteBackend::new(&server.url, fast_settings(2));
    let err = backend.complete(&CompletionRequest::new("p", 4)).unwrap_err();
    assert!(matches!(err, BackendError::Run(_)), "{err:?}");
    assert_eq!(server.hits(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let server = MockServer::start(|_| (400, json!({"error": "bad"}).to_string()));
    let backend = RemoteBackend::new(&server.url, fast_settings(2));
    assert!(backend.complete(&CompletionRequest::new("p", 4)).is_err());
    assert_eq!(server.hits(), 1);
}

#[test]
fn transient_failure_then_success() {
    let server = MockServer::start({
        let calls = std::sync::atomic::AtomicUsize::new(0);
        move |_| {
            if calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst) == 0 {
                (503, "{}".into())
            } else {
                (200, json!({"text": "Ok.", "finish_reason": "stop"}).to_string())
            }
        }
    });
    let backend = RemoteBackend::new(&server.url, fast_settings(2));
    assert_eq!(backend.complete(&CompletionRequest::new("p", 4)).unwrap().text, "Ok.");
    assert_eq!(server.hits(), 2);
}

#[test]
fn unreachable_backend_is_run_error() {
    let backend = RemoteBackend::new(dead_url(), fast_settings(1));
    assert!(matches!(backend.complete(&CompletionRequest::new("p", 4)), Err(BackendError::Run(_))));
}

#[test]
fn conforming_parse_service() {
    let server = MockServer::start(|req| {
        assert_eq!(req.path, "/parse");
        let tokens = if req.body["sentence"] == "She runs." {
            json!([{"text": "She", "pos": "PRP", "dep": "nsubj"}, {"text": "runs", "pos": "VBZ", "dep": "ROOT"}, {"text": ".", "pos": ".", "dep": "punct"}])
        } else {
            json!([{"text": "Running", "pos": "VBG", "dep": "ROOT"}, {"text": ".", "pos": ".", "dep": "punct"}])
        };
        (200, json!({ "tokens": tokens }).to_string())
    });
    let parser = RemoteParser::new(&server.url, fast_settings(0));
    let parse = parser.remote_parse("She runs.").unwrap();
    assert_eq!(parse.len(), 3);
    assert_eq!(parse[0].surface, "She");
    assert!(check_sentence(&parser, "She runs."));
    assert!(!check_sentence(&parser, "Running."));
}

#[test]
fn unreachable_parse_service_is_retryable() {
    let parser = RemoteParser::new(dead_url(), fast_settings(0));
    assert!(matches!(parser.remote_parse("She runs."), Err(GrammarError::Retryable(_))));
    // The provider interface falls back to the offline tagger.
    assert!(parser.parse("She runs.").is_ok());
    assert!(check_sentence(&parser, "She runs."));
}

#[test]
fn malformed_parse_reply_is_protocol_error() {
    let server = MockServer::start(|_| (200, json!({"tokens": [{"text": "She", "pos": "PRP"}]}).to_string()));
    let parser = RemoteParser::new(&server.url, fast_settings(0));
    assert!(matches!(parser.remote_parse("She runs."), Err(GrammarError::Protocol(_))));

    let empty = MockServer::start(|_| (200, json!({"tokens": []}).to_string()));
    let parser = RemoteParser::new(&empty.url, fast_settings(0));
    assert!(matches!(parser.remote_parse("She runs."), Err(GrammarError::Protocol(_))));
}

#[test]
fn free_remote_parse_function() {
    let server = MockServer::start(|_| (200, json!({"tokens": [{"text": "It", "pos": "PRP", "dep": "nsubj"}, {"text": "is", "pos": "VBZ", "dep": "ROOT"}]}).to_string()));
    let parse = sample_select::grammar::remote_parse("It is", &server.url).unwrap();
    assert_eq!(parse[1].pos, "VBZ");
}

#[test]
fn remote_entailment() {
    let server = MockServer::start(|req| {
        assert_eq!(req.path, "/entail");
        let same = req.body["premise"].as_str().unwrap().to_lowercase() == req.body["hypothesis"].as_str().unwrap().to_lowercase();
        (200, json!({ "entails": same }).to_string())
    });
    let pred = RemoteEntailment::new(&server.url, fast_settings(0));
    assert!(pred.entails("A b.", "a B.").unwrap());
    let responses: Vec<String> = ["A b.", "a b.", "c."].iter().map(|s| s.to_string()).collect();
    assert_eq!(agreement_score(0, &responses, &pred).unwrap(), 1);
    assert_eq!(agreement_score(2, &responses, &pred).unwrap(), 0);

    let down = RemoteEntailment::new(dead_url(), fast_settings(0));
    assert!(matches!(down.entails("a", "b"), Err(ScoringError::Scorer(_))));
}
