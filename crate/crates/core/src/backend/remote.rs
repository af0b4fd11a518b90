//! Client for completion servers speaking `POST /v1/completions`.

use reqwest::blocking::Client;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{BackendError, CompletionRequest, CompletionResult, SamplingBackend};
use crate::http::{self, HttpSettings};

#[derive(Debug, Clone)]
pub struct RemoteBackend {
    base_url: String,
    model: Option<String>,
    client: Client,
    settings: HttpSettings,
    supports_logprobs: bool,
    supports_greedy: bool,
}

#[derive(Deserialize)]
struct CompletionReply {
    text: String,
    finish_reason: String,
    #[serde(default)]
    token_logprobs: Option<Vec<f64>>,
}

impl RemoteBackend {
    pub fn new(base_url: impl Into<String>, settings: HttpSettings) -> Self {
        Self {
            base_url: base_url.into(),
            model: None,
            client: http::build_client(&settings),
            settings,
            supports_logprobs: true,
            supports_greedy: true,
        }
    }

    /// Adds a `"model"` field to every request body.
    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = Some(model.into());
        self
    }

    pub fn with_capabilities(mut self, logprobs: bool, greedy: bool) -> Self {
        self.supports_logprobs = logprobs;
        self.supports_greedy = greedy;
        self
    }

    fn request_body(&self, req: &CompletionRequest) -> Value {
        let mut body = json!({
            "prompt": req.prompt,
            "max_tokens": req.max_tokens,
            "top_p": req.top_p,
            "temperature": req.temperature,
            "logprobs": req.want_logprobs,
        });
        if let Some(seed) = req.seed {
            body["seed"] = json!(seed);
        }
        if let Some(model) = &self.model {
            body["model"] = json!(model);
        }
        body
    }
}

fn decode_reply(value: Value, want_logprobs: bool) -> Result<CompletionResult, BackendError> {
    if let Some(err) = value.get("error") {
        return Err(BackendError::Run(format!("server error: {err}")));
    }
    let reply: CompletionReply = serde_json::from_value(value)
        .map_err(|e| BackendError::Run(format!("malformed completion reply: {e}")))?;
    let ended = match reply.finish_reason.as_str() {
        "stop" => true,
        "length" => false,
        other => return Err(BackendError::Run(format!("unknown finish_reason {other:?}"))),
    };
    if want_logprobs {
        match &reply.token_logprobs {
            None => return Err(BackendError::Run("reply lacks token_logprobs".into())),
            Some(lp) if lp.iter().any(|x| *x > 0.0 || x.is_nan()) => {
                return Err(BackendError::Run("token logprobs must be non-positive".into()))
            }
            _ => {}
        }
    }
    Ok(CompletionResult {
        text: reply.text,
        ended,
        token_logprobs: if want_logprobs { reply.token_logprobs } else { None },
    })
}

impl SamplingBackend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn supports_logprobs(&self) -> bool {
        self.supports_logprobs
    }

    fn supports_greedy(&self) -> bool {
        self.supports_greedy
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        req.validate()?;
        let url = http::endpoint(&self.base_url, "/v1/completions");
        let value = http::post_json_with_retry(&self.client, &url, &self.request_body(req), &self.settings)
            .map_err(|e| {
                if e.is_transient() {
                    BackendError::Run(format!("giving up after {} retries: {e}", self.settings.retries))
                } else {
                    BackendError::Run(e.to_string())
                }
            })?;
        decode_reply(value, req.want_logprobs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finish_reason_maps_to_ended() {
        let r = decode_reply(json!({"text": "Hi.", "finish_reason": "stop"}), false).unwrap();
        assert!(r.ended);
        let r = decode_reply(json!({"text": "Hi", "finish_reason": "length"}), false).unwrap();
        assert!(!r.ended);
        assert!(decode_reply(json!({"text": "Hi", "finish_reason": "eos"}), false).is_err());
    }

    #[test]
    fn error_payload_is_run_error() {
        let r = decode_reply(json!({"error": {"message": "overloaded"}}), false);
        assert!(matches!(r, Err(BackendError::Run(_))));
        assert!(decode_reply(json!({"finish_reason": "stop"}), false).is_err());
    }

    #[test]
    fn logprobs_are_checked() {
        let ok = json!({"text": "a b", "finish_reason": "stop", "token_logprobs": [-0.1, -2.0]});
        assert_eq!(decode_reply(ok, true).unwrap().token_logprobs, Some(vec![-0.1, -2.0]));
        let missing = json!({"text": "a", "finish_reason": "stop"});
        assert!(decode_reply(missing, true).is_err());
        let positive = json!({"text": "a", "finish_reason": "stop", "token_logprobs": [0.5]});
        assert!(decode_reply(positive, true).is_err());
    }

    #[test]
    fn body_carries_optional_fields() {
        let backend = RemoteBackend::new("http://x", HttpSettings::default()).with_model("m");
        let mut req = CompletionRequest::new("p", 5);
        let body = backend.request_body(&req);
        assert!(body.get("seed").is_none());
        assert_eq!(body["model"], "m");
        req.seed = Some(9);
        assert_eq!(backend.request_body(&req)["seed"], 9);
    }
}
