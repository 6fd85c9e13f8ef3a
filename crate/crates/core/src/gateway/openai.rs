//! OpenAI-compatible `/chat/completions` client.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{ChatBackend, ChatRequest, ChatResponse, FinishReason, GatewayError, Provenance, Usage};

#[derive(Debug)]
pub struct OpenAiBackend {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl OpenAiBackend {
    /// `base_url` is the API root, e.g. `https://api.openai.com/v1`.
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key,
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

/// Classifies a non-2xx provider reply.
pub fn classify_http_error(status: u16, body: &str) -> GatewayError {
    let parsed: Option<serde_json::Value> = serde_json::from_str(body).ok();
    let error = parsed.as_ref().and_then(|v| v.get("error"));
    let code = error
        .and_then(|e| e.get("code"))
        .and_then(|c| c.as_str())
        .unwrap_or_default();
    let message = error
        .and_then(|e| e.get("message"))
        .and_then(|m| m.as_str())
        .map(str::to_owned)
        .unwrap_or_else(|| body.chars().take(500).collect());

    let lower = message.to_ascii_lowercase();
    if code == "context_length_exceeded"
        || lower.contains("context length")
        || lower.contains("maximum context")
        || lower.contains("context window")
    {
        return GatewayError::ContextLengthExceeded(message);
    }
    match status {
        408 | 409 | 429 | 500..=599 => GatewayError::Transport(format!("HTTP {status}: {message}")),
        _ => GatewayError::Provider { status, message },
    }
}

impl ChatBackend for OpenAiBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let payload = json!({
            "model": req.model_id,
            "messages": req.messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let mut builder = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            builder = builder.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = builder
            .send_json(&payload)
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(classify_http_error(status, &body));
        }

        let wire: WireResponse = serde_json::from_str(&body).map_err(|e| GatewayError::Provider {
            status,
            message: format!("malformed completion body: {e}"),
        })?;
        let choice = wire.choices.into_iter().next().ok_or(GatewayError::Provider {
            status,
            message: "completion has no choices".into(),
        })?;
        let usage = wire.usage.map_or_else(Usage::default, |u| Usage {
            prompt_tokens: u.prompt_tokens,
            completion_tokens: u.completion_tokens,
        });
        Ok(ChatResponse {
            content: choice.message.content.unwrap_or_default(),
            finish_reason: FinishReason::from_wire(choice.finish_reason.as_deref()),
            usage,
            provenance: Provenance::Live,
        })
    }

    fn name(&self) -> &str {
        "openai-compatible"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn context_errors_are_recognized() {
        let body = r#"{"error": {"message": "This model's maximum context length is 8192 tokens", "code": "context_length_exceeded"}}"#;
        assert!(matches!(
            classify_http_error(400, body),
            GatewayError::ContextLengthExceeded(_)
        ));
        let body = r#"{"error": {"message": "Input exceeds the context window", "code": null}}"#;
        assert!(matches!(
            classify_http_error(400, body),
            GatewayError::ContextLengthExceeded(_)
        ));
    }

    #[test]
    fn status_classes() {
        assert!(classify_http_error(429, "slow down").is_transient());
        assert!(classify_http_error(503, "").is_transient());
        assert_eq!(
            classify_http_error(401, r#"{"error": {"message": "bad key"}}"#),
            GatewayError::Provider {
                status: 401,
                message: "bad key".into()
            }
        );
    }

    #[test]
    fn url_joins_base() {
        let b = OpenAiBackend::new("http://localhost:8000/v1/", None, Duration::from_secs(1));
        assert_eq!(b.url(), "http://localhost:8000/v1/chat/completions");
    }
}
