use std::time::Duration;

use serde_json::{json, Value};

use super::embed::EmbeddingVector;
use super::params::{ProviderConfig, ProviderKind};
use super::{CompletionRequest, GatewayError, Provider};

/// Chat-completion style HTTP provider.
#[derive(Debug)]
pub struct RemoteProvider {
    cfg: ProviderConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl RemoteProvider {
    pub fn new(cfg: ProviderConfig) -> Result<Self, GatewayError> {
        cfg.validate()?;
        let api_key = match &cfg.credentials_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| GatewayError::InvalidConfig(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| GatewayError::InvalidConfig(e.to_string()))?;
        Ok(Self { cfg, client, api_key })
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, GatewayError> {
        let url = format!("{}{}", self.cfg.endpoint, path);
        let mut req = self.client.post(&url).json(body);
        if let Some(key) = &self.api_key {
            let value = if self.cfg.auth_header.eq_ignore_ascii_case("authorization") {
                format!("Bearer {key}")
            } else {
                key.clone()
            };
            req = req.header(self.cfg.auth_header.as_str(), value);
        }
        let resp = req.send().map_err(|e| GatewayError::Unavailable {
            attempts: 1,
            detail: e.to_string(),
        })?;
        let status = resp.status();
        if status.as_u16() == 429 {
            return Err(GatewayError::RateLimited { attempts: 1 });
        }
        if status.is_server_error() {
            return Err(GatewayError::Unavailable {
                attempts: 1,
                detail: format!("{url} returned {status}"),
            });
        }
        let text = resp.text().map_err(|e| GatewayError::Unavailable {
            attempts: 1,
            detail: e.to_string(),
        })?;
        if !status.is_success() {
            return Err(GatewayError::Rejected(format!("{status}: {text}")));
        }
        serde_json::from_str(&text).map_err(|e| GatewayError::Rejected(format!("malformed response: {e}")))
    }
}

pub(crate) fn chat_body(cfg: &ProviderConfig, request: &CompletionRequest) -> Value {
    json!({
        "model": cfg.model,
        "messages": request.messages,
        "temperature": request.params.temperature,
        "top_p": request.params.top_p,
        "frequency_penalty": request.params.frequency_penalty,
        "max_tokens": request.params.max_tokens,
        "seed": request.seed,
    })
}

pub(crate) fn parse_chat(v: &Value) -> Result<String, GatewayError> {
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| GatewayError::Rejected("response has no choices[0].message.content".into()))
}

pub(crate) fn parse_embedding(v: &Value) -> Result<EmbeddingVector, GatewayError> {
    let arr = v
        .pointer("/data/0/embedding")
        .and_then(Value::as_array)
        .ok_or_else(|| GatewayError::Rejected("response has no data[0].embedding".into()))?;
    let values = arr
        .iter()
        .map(|x| x.as_f64().ok_or_else(|| GatewayError::InvalidEmbedding("non-numeric entry".into())))
        .collect::<Result<Vec<_>, _>>()?;
    EmbeddingVector::new(values)
}

impl Provider for RemoteProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::RemoteApi
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        let v = self.post(&self.cfg.chat_path, &chat_body(&self.cfg, request))?;
        parse_chat(&v)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        let body = json!({ "model": self.cfg.embedding_model, "input": text });
        let v = self.post(&self.cfg.embeddings_path, &body)?;
        parse_embedding(&v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ChatMessage, GenerationParams, Bindings, Gateway, TemplateLibrary, CallContext};
    use crate::llm::{render_template, PromptTemplate, RetryPolicy};
    use std::sync::Arc;

    #[test]
    fn body_shape() {
        let cfg = ProviderConfig::remote("http://localhost:1", "X", "m");
        let req = CompletionRequest {
            template_id: "t".into(),
            scenario: None,
            messages: vec![ChatMessage::system("s"), ChatMessage::user("u")],
            bindings: Bindings::new(),
            params: GenerationParams::data_generation(),
            seed: 3,
        };
        let b = chat_body(&cfg, &req);
        assert_eq!(b["messages"][0]["role"], "system");
        assert_eq!(b["messages"][1]["content"], "u");
        assert_eq!(b["frequency_penalty"], 1.0);
        assert_eq!(b["top_p"], 0.95);
    }

    #[test]
    fn response_parsing() {
        let v: Value = serde_json::from_str(r#"{"choices":[{"message":{"role":"assistant","content":"hi"}}]}"#).unwrap();
        assert_eq!(parse_chat(&v).unwrap(), "hi");
        assert!(parse_chat(&json!({})).is_err());
        let e: Value = serde_json::from_str(r#"{"data":[{"embedding":[0.5, 1.5]}]}"#).unwrap();
        assert_eq!(parse_embedding(&e).unwrap().0, vec![0.5, 1.5]);
    }

    #[test]
    fn unreachable_endpoint_is_unavailable() {
        let mut cfg = ProviderConfig::remote("http://127.0.0.1:9", "PATH", "m");
        cfg.timeout_secs = 2;
        let provider = RemoteProvider::new(cfg).unwrap();
        let g = Gateway::new(Arc::new(provider), TemplateLibrary::bundled()).with_retry(RetryPolicy {
            max_attempts: 2,
            initial_backoff_ms: 1,
            multiplier: 1.0,
        });
        let prompt = render_template(&PromptTemplate::new("t", "s", "u"), &Bindings::new()).unwrap();
        let err = g
            .complete(&prompt, &[], &CallContext::default(), &GenerationParams::default())
            .unwrap_err();
        assert!(matches!(err, GatewayError::Unavailable { attempts: 2, .. }), "{err:?}");
    }

    #[test]
    fn missing_credentials_rejected() {
        let cfg = ProviderConfig::remote("http://127.0.0.1:9", "SIMULACRA_TEST_UNSET_KEY", "m");
        assert!(matches!(RemoteProvider::new(cfg), Err(GatewayError::InvalidConfig(_))));
    }
}
