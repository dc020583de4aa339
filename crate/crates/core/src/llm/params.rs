use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GenerationParams {
    pub frequency_penalty: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl GenerationParams {
    /// Parameters for profile, biography, story and memory generation.
    pub fn data_generation() -> Self {
        Self {
            frequency_penalty: 1.0,
            top_p: 0.95,
            max_tokens: 2048,
            temperature: 1.0,
        }
    }

    /// Greedy decoding for scored evaluation runs.
    pub fn evaluation() -> Self {
        Self {
            frequency_penalty: 0.0,
            top_p: 1.0,
            max_tokens: 1024,
            temperature: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |reason: &str| Err(GatewayError::InvalidConfig(reason.to_string()));
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad("topP must be in (0, 1]");
        }
        if self.max_tokens == 0 {
            return bad("maxTokens must be positive");
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be a finite value >= 0");
        }
        if !self.frequency_penalty.is_finite() {
            return bad("frequencyPenalty must be finite");
        }
        Ok(())
    }
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self::data_generation()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    RemoteApi,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub multiplier: f64,
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1` (0-based `attempt`).
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = self.multiplier.max(1.0).powi(attempt as i32);
        Duration::from_millis((self.initial_backoff_ms as f64 * factor).round() as u64)
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff_ms: 500,
            multiplier: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    pub credentials_env: Option<String>,
    pub auth_header: String,
    pub chat_path: String,
    pub embeddings_path: String,
    pub model: String,
    pub embedding_model: String,
    pub requests_per_minute: u32,
    pub retry: RetryPolicy,
    pub timeout_secs: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self::mock()
    }
}

impl ProviderConfig {
    pub fn mock() -> Self {
        Self {
            kind: ProviderKind::Mock,
            endpoint: String::new(),
            credentials_env: None,
            auth_header: "Authorization".into(),
            chat_path: "/v1/chat/completions".into(),
            embeddings_path: "/v1/embeddings".into(),
            model: String::new(),
            embedding_model: String::new(),
            requests_per_minute: 6000,
            retry: RetryPolicy::default(),
            timeout_secs: 60,
        }
    }

    pub fn remote(endpoint: &str, credentials_env: &str, model: &str) -> Self {
        Self {
            kind: ProviderKind::RemoteApi,
            endpoint: endpoint.trim_end_matches('/').to_string(),
            credentials_env: Some(credentials_env.to_string()),
            model: model.to_string(),
            embedding_model: "text-embedding-3-small".into(),
            requests_per_minute: 60,
            ..Self::mock()
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.requests_per_minute == 0 {
            return Err(GatewayError::InvalidConfig("rate limit must be > 0".into()));
        }
        if self.retry.max_attempts == 0 {
            return Err(GatewayError::InvalidConfig("retry maxAttempts must be >= 1".into()));
        }
        match self.kind {
            ProviderKind::Mock => {
                if self.credentials_env.is_some() {
                    return Err(GatewayError::InvalidConfig("mock provider takes no credentials".into()));
                }
            }
            ProviderKind::RemoteApi => {
                if self.endpoint.is_empty() {
                    return Err(GatewayError::InvalidConfig("remote provider needs an endpoint".into()));
                }
                if self.model.is_empty() {
                    return Err(GatewayError::InvalidConfig("remote provider needs a model".into()));
                }
            }
        }
        Ok(())
    }
}
