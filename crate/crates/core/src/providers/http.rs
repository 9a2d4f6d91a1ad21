//! HTTP provider client.
//!
//! POSTs `{role, task, payload}` as JSON to the configured endpoint and
//! expects `{payload: ...}` back. Transport failures are retried up to
//! `max_retries` times; the final error carries the attempt count. A JSON
//! body with an `error` field is a capability refusal and is not retried.
//!
//! Uses a blocking client; construct and call it from a plain thread, not
//! from inside an async runtime.

use std::time::Duration;

use super::cache::CachingProvider;
use super::{Provider, ProviderConfig, ProviderError, ProviderRequest, ProviderResponse, Role};

pub struct HttpProvider {
    config: ProviderConfig,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(config: ProviderConfig) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ProviderError::Transport {
                attempts: 0,
                message: format!("client construction failed: {e}"),
            })?;
        Ok(HttpProvider { config, client })
    }

    fn attempt(&self, request: &ProviderRequest) -> Result<ProviderResponse, AttemptError> {
        let mut builder = self.client.post(&self.config.endpoint).json(request);
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| AttemptError::Retryable(e.to_string()))?;
        let status = response.status();
        let body: serde_json::Value = response
            .json()
            .map_err(|e| AttemptError::Retryable(format!("bad response body: {e}")))?;
        if let Some(err) = body.get("error").and_then(serde_json::Value::as_str) {
            return Err(AttemptError::Fatal(ProviderError::Capability(err.to_string())));
        }
        if !status.is_success() {
            return Err(AttemptError::Retryable(format!("http status {status}")));
        }
        let payload = body
            .get("payload")
            .cloned()
            .ok_or_else(|| AttemptError::Fatal(ProviderError::Contract("response missing 'payload'".into())))?;
        Ok(ProviderResponse { payload })
    }
}

enum AttemptError {
    Retryable(String),
    Fatal(ProviderError),
}

impl Provider for HttpProvider {
    fn role(&self) -> Role {
        self.config.role
    }

    fn call(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        let max_attempts = self.config.max_retries + 1;
        let mut last_message = String::new();
        for attempt in 1..=max_attempts {
            match self.attempt(request) {
                Ok(response) => return Ok(response),
                Err(AttemptError::Fatal(e)) => return Err(e),
                Err(AttemptError::Retryable(message)) => last_message = message,
            }
            if attempt < max_attempts {
                std::thread::sleep(Duration::from_millis(50 * attempt as u64));
            }
        }
        Err(ProviderError::Transport {
            attempts: max_attempts,
            message: last_message,
        })
    }
}

/// Build a provider from config: HTTP transport, wrapped in the disk cache
/// when `cache_dir` is set.
pub fn provider_from_config(config: ProviderConfig) -> Result<Box<dyn Provider>, ProviderError> {
    let cache_dir = config.cache_dir.clone();
    let http = HttpProvider::new(config)?;
    Ok(match cache_dir {
        Some(dir) => Box::new(CachingProvider::new(http, dir)),
        None => Box::new(http),
    })
}
