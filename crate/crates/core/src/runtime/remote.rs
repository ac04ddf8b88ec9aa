//! Chat-completion backend over HTTP.
//!
//! Request: `{"model": ..., "messages": [{"role", "content"}], ...params}`.
//! Response: `{"choices": [{"message": {"content": ...}}]}`.

use std::thread;
use std::time::Duration;

use serde_json::{json, Map, Value};

use super::backend::{Backend, BackendError, BackendMode, GenerationRequest};

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    /// Sent as a bearer token when non-empty.
    pub api_key: String,
    /// Extra request fields (temperature, top_p, ...) passed through as is.
    pub params: Map<String, Value>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff: Duration,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            params: Map::new(),
            timeout: Duration::from_secs(120),
            max_retries: 2,
            backoff: Duration::from_millis(500),
        }
    }
}

pub struct RemoteBackend {
    agent: ureq::Agent,
    config: RemoteConfig,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, config }
    }

    fn body(&self, request: &GenerationRequest<'_>) -> Value {
        let mut body = self.config.params.clone();
        body.insert("model".into(), json!(request.model_id));
        body.insert("messages".into(), json!(request.bundle.messages()));
        Value::Object(body)
    }

    fn attempt(&self, body: &Value, attempts: u32) -> Result<String, BackendError> {
        let mut req = self.agent.post(&self.config.endpoint);
        if !self.config.api_key.is_empty() {
            req = req.header("Authorization", &format!("Bearer {}", self.config.api_key));
        }
        let mut resp = req.send_json(body).map_err(|e| BackendError::Transport {
            attempts,
            message: e.to_string(),
        })?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport {
                attempts,
                message: e.to_string(),
            })?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Http {
                status,
                attempts,
                body: text,
            });
        }
        extract_content(&text)
    }
}

/// Pulls `choices[0].message.content` out of a chat-completion response.
pub fn extract_content(body: &str) -> Result<String, BackendError> {
    let value: Value = serde_json::from_str(body)
        .map_err(|e| BackendError::Protocol(format!("response is not JSON: {e}")))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::Protocol("missing choices[0].message.content".into()))
}

impl Backend for RemoteBackend {
    fn mode(&self) -> BackendMode {
        BackendMode::Remote
    }

    fn generate(&self, request: &GenerationRequest<'_>) -> Result<String, BackendError> {
        let body = self.body(request);
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body, attempts) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retryable() && attempts <= self.config.max_retries => {
                    thread::sleep(self.config.backoff * 2u32.pow(attempts - 1));
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_extraction() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"hi"}}]}"#;
        assert_eq!(extract_content(body).unwrap(), "hi");
        assert!(matches!(extract_content("{}"), Err(BackendError::Protocol(_))));
        assert!(matches!(extract_content("nope"), Err(BackendError::Protocol(_))));
    }
}
