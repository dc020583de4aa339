//! Provider-agnostic text generation and embedding, prompt templates and a
//! deterministic mock provider.

mod embed;
mod mock;
mod params;
mod ratelimit;
mod remote;
mod template;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use embed::{cosine, hashed_bag_of_words, tokens, EmbeddingVector, MOCK_EMBEDDING_DIM};
pub use mock::{FixtureSet, MockProvider, TemplateFixtures};
pub use params::{GenerationParams, ProviderConfig, ProviderKind, RetryPolicy};
pub use ratelimit::{Clock, ManualClock, RateLimiter, SystemClock};
pub use remote::RemoteProvider;
pub use template::{
    bindings, ids, placeholders_in, render_fixture, render_template, Bindings, PromptTemplate, RenderedPrompt,
    TemplateLibrary,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("template {template}: missing binding for {{{placeholder}}}")]
    MissingBinding { template: String, placeholder: String },
    #[error("template {template}: {reason}")]
    InvalidTemplate { template: String, reason: String },
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("no mock fixture for template {template:?} (scenario {scenario:?})")]
    FixtureMissing { template: String, scenario: Option<String> },
    #[error("provider unavailable after {attempts} attempt(s): {detail}")]
    Unavailable { attempts: u32, detail: String },
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("provider rejected the request: {0}")]
    Rejected(String),
    #[error("provider returned an empty completion")]
    EmptyCompletion,
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding dimensions differ ({left} vs {right})")]
    DimensionMismatch { left: usize, right: usize },
    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),
    #[error("invalid provider configuration: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    Io(String),
}

impl GatewayError {
    fn retryable(&self) -> bool {
        matches!(self, Self::Unavailable { .. } | Self::RateLimited { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// Per-call routing for the mock and seed for deterministic fixtures. `extra`
/// bindings are visible to fixtures but never sent to a remote provider.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CallContext {
    pub scenario: Option<String>,
    pub seed: u64,
    pub extra: Bindings,
}

impl CallContext {
    pub fn seeded(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn with_scenario(mut self, scenario: Option<String>) -> Self {
        self.scenario = scenario;
        self
    }

    pub fn with_extra(mut self, extra: &Bindings) -> Self {
        self.extra.extend(extra.iter().map(|(k, v)| (k.clone(), v.clone())));
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub template_id: String,
    pub scenario: Option<String>,
    pub messages: Vec<ChatMessage>,
    /// Template bindings merged with the context extras.
    pub bindings: Bindings,
    pub params: GenerationParams,
    pub seed: u64,
}

pub trait Provider: Send + Sync {
    fn kind(&self) -> ProviderKind;
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError>;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError>;
}

/// Shared entry point for every model call: templates, rate limiting and
/// retries around one provider.
#[derive(Clone)]
pub struct Gateway {
    provider: Arc<dyn Provider>,
    templates: Arc<TemplateLibrary>,
    limiter: Option<Arc<RateLimiter>>,
    clock: Arc<dyn Clock>,
    retry: RetryPolicy,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("provider", &self.provider.kind())
            .field("limiter", &self.limiter)
            .field("retry", &self.retry)
            .finish()
    }
}

impl Gateway {
    /// No rate limit until [`Gateway::with_rate_limit`] is applied.
    pub fn new(provider: Arc<dyn Provider>, templates: TemplateLibrary) -> Self {
        Self {
            provider,
            templates: Arc::new(templates),
            limiter: None,
            clock: Arc::new(SystemClock::default()),
            retry: RetryPolicy::default(),
        }
    }

    /// Bundled templates with the bundled mock fixtures.
    pub fn mock() -> Self {
        Self::new(Arc::new(MockProvider::bundled()), TemplateLibrary::bundled())
    }

    pub fn from_config(cfg: &ProviderConfig, templates: TemplateLibrary) -> Result<Self, GatewayError> {
        cfg.validate()?;
        let provider: Arc<dyn Provider> = match cfg.kind {
            ProviderKind::Mock => Arc::new(MockProvider::bundled()),
            ProviderKind::RemoteApi => Arc::new(RemoteProvider::new(cfg.clone())?),
        };
        let gateway = Self::new(provider, templates).with_retry(cfg.retry.clone());
        Ok(match cfg.kind {
            ProviderKind::Mock => gateway,
            ProviderKind::RemoteApi => gateway.with_rate_limit(cfg.requests_per_minute, Arc::new(SystemClock::default())),
        })
    }

    pub fn with_rate_limit(mut self, per_minute: u32, clock: Arc<dyn Clock>) -> Self {
        self.limiter = Some(Arc::new(RateLimiter::per_minute(per_minute, clock.clone())));
        self.clock = clock;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn provider_kind(&self) -> ProviderKind {
        self.provider.kind()
    }

    pub fn templates(&self) -> &TemplateLibrary {
        &self.templates
    }

    pub fn render(&self, id: &str, values: &Bindings) -> Result<RenderedPrompt, GatewayError> {
        self.templates.render(id, values)
    }

    /// Sends `prompt` (system text, then `history`, then user text) and returns
    /// the completion.
    pub fn complete(
        &self,
        prompt: &RenderedPrompt,
        history: &[ChatMessage],
        ctx: &CallContext,
        params: &GenerationParams,
    ) -> Result<String, GatewayError> {
        params.validate()?;
        let mut messages = Vec::with_capacity(history.len() + 2);
        if !prompt.system.trim().is_empty() {
            messages.push(ChatMessage::system(prompt.system.clone()));
        }
        messages.extend_from_slice(history);
        if !prompt.user.trim().is_empty() {
            messages.push(ChatMessage::user(prompt.user.clone()));
        }
        let mut merged = prompt.bindings.clone();
        merged.extend(ctx.extra.iter().map(|(k, v)| (k.clone(), v.clone())));
        let request = CompletionRequest {
            template_id: prompt.template_id.clone(),
            scenario: ctx.scenario.clone(),
            messages,
            bindings: merged,
            params: *params,
            seed: ctx.seed,
        };
        let text = self.with_retries(|| self.provider.complete(&request))?;
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyCompletion);
        }
        Ok(text)
    }

    /// Renders template `id` and completes it without history.
    pub fn generate(
        &self,
        id: &str,
        values: &Bindings,
        ctx: &CallContext,
        params: &GenerationParams,
    ) -> Result<String, GatewayError> {
        let prompt = self.render(id, values)?;
        self.complete(&prompt, &[], ctx, params)
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyText);
        }
        self.with_retries(|| self.provider.embed(text))
    }

    fn with_retries<T>(&self, mut call: impl FnMut() -> Result<T, GatewayError>) -> Result<T, GatewayError> {
        let mut attempt = 0;
        loop {
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            match call() {
                Ok(v) => return Ok(v),
                Err(e) if e.retryable() && attempt + 1 < self.retry.max_attempts => {
                    tracing::warn!(attempt = attempt + 1, error = %e, "provider call failed, retrying");
                    self.clock.sleep(self.retry.backoff(attempt));
                    attempt += 1;
                }
                Err(GatewayError::Unavailable { detail, .. }) => {
                    return Err(GatewayError::Unavailable {
                        attempts: attempt + 1,
                        detail,
                    })
                }
                Err(GatewayError::RateLimited { .. }) => return Err(GatewayError::RateLimited { attempts: attempt + 1 }),
                Err(e) => return Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::time::Duration;

    struct Flaky {
        failures: u32,
        calls: AtomicU32,
        error: GatewayError,
    }

    impl Provider for Flaky {
        fn kind(&self) -> ProviderKind {
            ProviderKind::RemoteApi
        }
        fn complete(&self, _: &CompletionRequest) -> Result<String, GatewayError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(self.error.clone())
            } else {
                Ok("ok".into())
            }
        }
        fn embed(&self, _: &str) -> Result<EmbeddingVector, GatewayError> {
            Err(self.error.clone())
        }
    }

    fn flaky(failures: u32, error: GatewayError) -> (Arc<Flaky>, Gateway, Arc<ManualClock>) {
        let p = Arc::new(Flaky {
            failures,
            calls: AtomicU32::new(0),
            error,
        });
        let clock = Arc::new(ManualClock::default());
        let g = Gateway::new(p.clone(), TemplateLibrary::bundled())
            .with_rate_limit(1000, clock.clone())
            .with_retry(RetryPolicy {
                max_attempts: 3,
                initial_backoff_ms: 100,
                multiplier: 2.0,
            });
        (p, g, clock)
    }

    fn prompt() -> RenderedPrompt {
        render_template(&PromptTemplate::new("t", "sys", "hi"), &Bindings::new()).unwrap()
    }

    #[test]
    fn retries_then_succeeds() {
        let (p, g, clock) = flaky(2, GatewayError::Unavailable { attempts: 1, detail: "down".into() });
        let out = g.complete(&prompt(), &[], &CallContext::default(), &GenerationParams::default()).unwrap();
        assert_eq!(out, "ok");
        assert_eq!(p.calls.load(Ordering::SeqCst), 3);
        assert_eq!(clock.now(), Duration::from_millis(300));
    }

    #[test]
    fn surfaces_unavailable_after_attempts() {
        let (p, g, _) = flaky(10, GatewayError::Unavailable { attempts: 1, detail: "down".into() });
        let err = g.complete(&prompt(), &[], &CallContext::default(), &GenerationParams::default()).unwrap_err();
        assert!(matches!(err, GatewayError::Unavailable { attempts: 3, .. }));
        assert_eq!(p.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn surfaces_rate_limited() {
        let (_, g, _) = flaky(10, GatewayError::RateLimited { attempts: 1 });
        let err = g.complete(&prompt(), &[], &CallContext::default(), &GenerationParams::default()).unwrap_err();
        assert_eq!(err, GatewayError::RateLimited { attempts: 3 });
    }

    #[test]
    fn rejected_is_not_retried() {
        let (p, g, _) = flaky(10, GatewayError::Rejected("bad".into()));
        assert!(g.complete(&prompt(), &[], &CallContext::default(), &GenerationParams::default()).is_err());
        assert_eq!(p.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn embed_rejects_empty() {
        assert_eq!(Gateway::mock().embed("").unwrap_err(), GatewayError::EmptyText);
    }

    #[test]
    fn message_order() {
        let mock = Arc::new(MockProvider::new().recording().with_fixture("t", None, ["fine"]));
        let g = Gateway::new(mock.clone(), TemplateLibrary::bundled());
        let history = [ChatMessage::user("before"), ChatMessage::assistant("reply")];
        g.complete(&prompt(), &history, &CallContext::default(), &GenerationParams::default()).unwrap();
        let call = mock.calls().pop().unwrap();
        let roles: Vec<Role> = call.messages.iter().map(|m| m.role).collect();
        assert_eq!(roles, [Role::System, Role::User, Role::Assistant, Role::User]);
        assert_eq!(call.messages[3].content, "hi");
    }
}
