//! OpenAI-compatible chat completions over HTTPS.

use std::time::Duration;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::inference::{Provider, ProviderConfig};
use crate::prompting::PromptPair;

pub const API_TOKEN_ENV: &str = "TRIAGE_API_TOKEN";

pub struct RemoteProvider {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    temperature: f64,
    token: Option<String>,
    timeout: Duration,
}

impl RemoteProvider {
    pub fn new(config: &ProviderConfig, token: Option<String>) -> Result<Self> {
        let timeout = Duration::from_millis(config.timeout_ms);
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(RemoteProvider {
            client,
            endpoint: config.endpoint.clone(),
            model: config.model.clone(),
            temperature: config.temperature,
            token,
            timeout,
        })
    }

    /// Reads the bearer token from `TRIAGE_API_TOKEN`.
    pub fn from_env(config: &ProviderConfig) -> Result<Self> {
        Self::new(config, std::env::var(API_TOKEN_ENV).ok().filter(|t| !t.is_empty()))
    }

    fn body(&self, pair: &PromptPair) -> Value {
        json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [
                {"role": "system", "content": pair.system_text},
                {"role": "user", "content": pair.user_text},
            ],
        })
    }
}

fn completion_text(body: &Value) -> Option<&str> {
    body.get("choices")?.get(0)?.get("message")?.get("content")?.as_str()
}

impl Provider for RemoteProvider {
    fn name(&self) -> &str {
        &self.model
    }

    fn complete(&self, pair: &PromptPair) -> Result<String> {
        let mut request = self.client.post(&self.endpoint).json(&self.body(pair));
        if let Some(token) = &self.token {
            request = request.bearer_auth(token);
        }
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                Error::Timeout(self.timeout.as_millis())
            } else {
                Error::Fetch {
                    url: self.endpoint.clone(),
                    reason: e.to_string(),
                }
            }
        })?;
        let status = response.status();
        if status.as_u16() == 429 {
            let retry_after_secs = response
                .headers()
                .get(reqwest::header::RETRY_AFTER)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse().ok());
            return Err(Error::RateLimited { retry_after_secs });
        }
        let text = response.text().map_err(|e| Error::Fetch {
            url: self.endpoint.clone(),
            reason: e.to_string(),
        })?;
        if status.is_server_error() {
            return Err(Error::Fetch {
                url: self.endpoint.clone(),
                reason: format!("HTTP {status}"),
            });
        }
        if !status.is_success() {
            return Err(Error::Provider(format!("HTTP {status}: {}", text.trim())));
        }
        let body: Value = serde_json::from_str(&text)
            .map_err(|e| Error::Provider(format!("response is not JSON: {e}")))?;
        completion_text(&body)
            .map(str::to_string)
            .ok_or_else(|| Error::Provider("response has no choices[0].message.content".into()))
    }
}
