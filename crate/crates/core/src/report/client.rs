use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{generate_offline_report, VlmInputSet};
use crate::error::{Error, Result};

pub const API_KEY_ENV: &str = "THERMO_VLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    /// Either the API root (`.../v1`) or the full chat-completions URL.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub require_api_key: bool,
    pub timeout_secs: u64,
    pub max_retries: u32,
    /// First retry delay; doubles on every further attempt.
    pub backoff_base_ms: u64,
    pub offline: bool,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: "qwen-vl-chat".into(),
            api_key_env: API_KEY_ENV.into(),
            require_api_key: false,
            timeout_secs: 120,
            max_retries: 3,
            backoff_base_ms: 500,
            offline: false,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<()> {
        if self.offline {
            return Ok(());
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(Error::InvalidConfig(format!("endpoint URL {:?} is not http(s)", self.base_url)));
        }
        if self.timeout_secs == 0 {
            return Err(Error::InvalidConfig("timeout_secs must be positive".into()));
        }
        Ok(())
    }

    fn url(&self) -> String {
        let b = self.base_url.trim_end_matches('/');
        if b.ends_with("/chat/completions") {
            b.to_string()
        } else {
            format!("{b}/chat/completions")
        }
    }
}

fn request_body(input: &VlmInputSet, prompt: &str, model: &str) -> Value {
    let b64 = base64::engine::general_purpose::STANDARD;
    let mut content = vec![json!({"type": "text", "text": prompt})];
    for png in input.ordered_images() {
        content.push(json!({
            "type": "image_url",
            "image_url": {"url": format!("data:image/png;base64,{}", b64.encode(png))}
        }));
    }
    json!({
        "model": model,
        "temperature": 0,
        "messages": [{"role": "user", "content": content}],
    })
}

fn first_choice_text(body: &str) -> Result<String> {
    let v: Value = serde_json::from_str(body).map_err(|e| Error::MalformedResponse(e.to_string()))?;
    let content = v
        .pointer("/choices/0/message/content")
        .ok_or_else(|| Error::MalformedResponse("no choices[0].message.content".into()))?;
    match content {
        Value::String(s) => Ok(s.clone()),
        // Some servers return content as a list of typed parts.
        Value::Array(parts) => {
            let text: Vec<&str> = parts.iter().filter_map(|p| p.get("text")?.as_str()).collect();
            if text.is_empty() {
                Err(Error::MalformedResponse("content has no text parts".into()))
            } else {
                Ok(text.concat())
            }
        }
        _ => Err(Error::MalformedResponse("content is not text".into())),
    }
}

/// Sends the prompt and images to the endpoint and returns the first choice's
/// text. Offline mode returns the deterministic offline report instead.
pub fn call_vlm(input: &VlmInputSet, prompt: &str, endpoint: &EndpointConfig) -> Result<String> {
    if endpoint.offline {
        return Ok(generate_offline_report(&input.metrics, &input.regions));
    }
    endpoint.validate()?;
    let key = std::env::var(&endpoint.api_key_env).ok().filter(|k| !k.is_empty());
    if endpoint.require_api_key && key.is_none() {
        return Err(Error::MissingCredentials(endpoint.api_key_env.clone()));
    }
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(endpoint.timeout_secs))
        .build()
        .map_err(|e| Error::Transport(e.to_string()))?;
    let body = request_body(input, prompt, &endpoint.model);
    let url = endpoint.url();

    let mut attempt = 0u32;
    loop {
        let mut req = client.post(&url).json(&body);
        if let Some(k) = &key {
            req = req.bearer_auth(k);
        }
        let err = match req.send() {
            Ok(resp) => {
                let status = resp.status();
                let text = resp.text().map_err(|e| Error::Transport(e.to_string()))?;
                if status.is_success() {
                    return first_choice_text(&text);
                }
                let err = Error::HttpStatus { status: status.as_u16(), body: text };
                if !(status.is_server_error() || status.as_u16() == 429) {
                    return Err(err);
                }
                err
            }
            Err(e) => Error::Transport(e.to_string()),
        };
        if attempt >= endpoint.max_retries {
            return Err(err);
        }
        let delay = endpoint.backoff_base_ms.saturating_mul(1u64 << attempt.min(16));
        std::thread::sleep(Duration::from_millis(delay));
        attempt += 1;
    }
}
