//! The three interchangeable simulacrum backends behind one interface.

use serde::{Deserialize, Serialize};

use crate::character::CharacterProfile;
use crate::llm::{bindings, cosine, ids, Bindings, CallContext, ChatMessage, EmbeddingVector, Gateway, GenerationParams};
use crate::macm::{MacmConfig, MacmError, MacmSession, TurnRecord};
use crate::seed::derive;
use crate::story::chunk_story;

/// One thing said to a simulacrum.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Stimulus {
    pub text: String,
    /// Experiment phase, appended to the mock scenario key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<String>,
    /// Bindings visible to mock fixtures only.
    #[serde(default, skip_serializing_if = "Bindings::is_empty")]
    pub context: Bindings,
}

impl Stimulus {
    pub fn new(text: &str) -> Self {
        Self {
            text: text.to_string(),
            ..Self::default()
        }
    }

    pub fn with_phase(mut self, phase: &str) -> Self {
        self.phase = Some(phase.to_string());
        self
    }

    pub fn with_context(mut self, key: &str, value: impl Into<String>) -> Self {
        self.context.insert(key.to_string(), value.into());
        self
    }
}

/// `script/phase`, `script`, or nothing.
pub fn scenario_key(base: Option<&str>, phase: Option<&str>) -> Option<String> {
    match (base, phase) {
        (Some(b), Some(p)) => Some(format!("{b}/{p}")),
        (Some(b), None) => Some(b.to_string()),
        (None, _) => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Prompt,
    Rag,
    Macm,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Prompt, Method::Rag, Method::Macm];

    pub fn label(self) -> &'static str {
        match self {
            Self::Prompt => "Prompt",
            Self::Rag => "RAG",
            Self::Macm => "MACM",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "prompt" | "naive" => Ok(Self::Prompt),
            "rag" => Ok(Self::Rag),
            "macm" => Ok(Self::Macm),
            other => Err(format!("unknown method {other:?}")),
        }
    }
}

pub trait Simulacrum: Send {
    fn method(&self) -> Method;
    fn character(&self) -> &CharacterProfile;
    /// Answers within the running session; earlier turns are visible.
    fn respond(&mut self, stimulus: &Stimulus) -> Result<String, MacmError>;
    /// Starts a fresh session.
    fn reset(&mut self);
    fn transcript(&self) -> Vec<ChatMessage>;
}

/// Shared persona state of the history-only backends.
#[derive(Debug, Clone)]
struct Session {
    gateway: Gateway,
    profile: CharacterProfile,
    biography: String,
    scenario: Option<String>,
    seed: u64,
    params: GenerationParams,
    history: Vec<ChatMessage>,
}

impl Session {
    fn reply(&mut self, template: &str, mut values: Bindings, stimulus: &Stimulus) -> Result<String, MacmError> {
        if stimulus.text.trim().is_empty() {
            return Err(MacmError::EmptyQuery);
        }
        values.insert("character_name".into(), self.profile.name.clone());
        values.insert("basic_information".into(), self.profile.basic_information());
        values.insert("introduction".into(), self.biography.clone());
        let mut prompt = self.gateway.render(template, &values)?;
        if prompt.user.trim().is_empty() {
            prompt.user = stimulus.text.clone();
        }
        let turn = (self.history.len() / 2 + 1) as u64;
        let ctx = CallContext::seeded(derive(self.seed, &[turn]))
            .with_scenario(scenario_key(self.scenario.as_deref(), stimulus.phase.as_deref()))
            .with_extra(&self.profile.attribute_bindings())
            .with_extra(&stimulus.context);
        let reply = self.gateway.complete(&prompt, &self.history, &ctx, &self.params)?.trim().to_string();
        self.history.push(ChatMessage::user(stimulus.text.clone()));
        self.history.push(ChatMessage::assistant(reply.clone()));
        Ok(reply)
    }
}

/// The persona prompt alone.
#[derive(Debug, Clone)]
pub struct PromptSimulacrum {
    session: Session,
}

impl PromptSimulacrum {
    pub fn new(gateway: Gateway, profile: CharacterProfile, biography: &str) -> Self {
        Self {
            session: Session {
                gateway,
                profile,
                biography: biography.to_string(),
                scenario: None,
                seed: 0,
                params: GenerationParams::evaluation(),
                history: Vec::new(),
            },
        }
    }

    pub fn with_scenario(mut self, scenario: Option<String>) -> Self {
        self.session.scenario = scenario;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.session.seed = seed;
        self
    }

    pub fn with_params(mut self, params: GenerationParams) -> Self {
        self.session.params = params;
        self
    }
}

impl Simulacrum for PromptSimulacrum {
    fn method(&self) -> Method {
        Method::Prompt
    }

    fn character(&self) -> &CharacterProfile {
        &self.session.profile
    }

    fn respond(&mut self, stimulus: &Stimulus) -> Result<String, MacmError> {
        self.session.reply(ids::NAIVE_SIMULACRA, Bindings::new(), stimulus)
    }

    fn reset(&mut self) {
        self.session.history.clear();
    }

    fn transcript(&self) -> Vec<ChatMessage> {
        self.session.history.clone()
    }
}

/// The persona prompt plus the life-story chunks closest to the stimulus.
#[derive(Debug, Clone)]
pub struct RagSimulacrum {
    session: Session,
    chunks: Vec<(String, EmbeddingVector)>,
    top_k: usize,
}

impl RagSimulacrum {
    pub const DEFAULT_TOP_K: usize = 3;

    pub fn new(
        gateway: Gateway,
        profile: CharacterProfile,
        biography: &str,
        life_story: &str,
        granularity: usize,
    ) -> Result<Self, MacmError> {
        let chunks = chunk_story(life_story, granularity)?
            .into_iter()
            .map(|c| gateway.embed(&c.text).map(|e| (c.text, e)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            session: Session {
                gateway,
                profile,
                biography: biography.to_string(),
                scenario: None,
                seed: 0,
                params: GenerationParams::evaluation(),
                history: Vec::new(),
            },
            chunks,
            top_k: Self::DEFAULT_TOP_K,
        })
    }

    pub fn with_top_k(mut self, k: usize) -> Self {
        self.top_k = k.max(1);
        self
    }

    pub fn with_scenario(mut self, scenario: Option<String>) -> Self {
        self.session.scenario = scenario;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.session.seed = seed;
        self
    }

    /// Chunk texts ranked by cosine similarity to `query`, best first; ties
    /// keep story order.
    pub fn nearest(&self, query: &str) -> Result<Vec<&str>, MacmError> {
        let q = self.session.gateway.embed(query)?;
        let mut scored = self
            .chunks
            .iter()
            .enumerate()
            .map(|(i, (t, e))| Ok((i, cosine(q.as_slice(), e.as_slice())?, t.as_str())))
            .collect::<Result<Vec<_>, crate::llm::GatewayError>>()?;
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(scored.into_iter().take(self.top_k).map(|(_, _, t)| t).collect())
    }
}

impl Simulacrum for RagSimulacrum {
    fn method(&self) -> Method {
        Method::Rag
    }

    fn character(&self) -> &CharacterProfile {
        &self.session.profile
    }

    fn respond(&mut self, stimulus: &Stimulus) -> Result<String, MacmError> {
        if stimulus.text.trim().is_empty() {
            return Err(MacmError::EmptyQuery);
        }
        let knowledge = self.nearest(&stimulus.text)?.join("\n\n");
        self.session
            .reply(ids::RAG_SIMULACRA, bindings([("source_knowledge", knowledge)]), stimulus)
    }

    fn reset(&mut self) {
        self.session.history.clear();
    }

    fn transcript(&self) -> Vec<ChatMessage> {
        self.session.history.clone()
    }
}

/// The multi-agent backend.
#[derive(Debug)]
pub struct MacmSimulacrum {
    gateway: Gateway,
    session: MacmSession,
}

impl MacmSimulacrum {
    pub fn new(gateway: Gateway, session: MacmSession) -> Self {
        Self { gateway, session }
    }

    pub fn session(&self) -> &MacmSession {
        &self.session
    }

    pub fn session_mut(&mut self) -> &mut MacmSession {
        &mut self.session
    }

    pub fn last_turn(&self) -> Option<&TurnRecord> {
        self.session.turns().last()
    }

    pub fn config(&self) -> &MacmConfig {
        self.session.config()
    }
}

impl Simulacrum for MacmSimulacrum {
    fn method(&self) -> Method {
        Method::Macm
    }

    fn character(&self) -> &CharacterProfile {
        self.session.profile()
    }

    fn respond(&mut self, stimulus: &Stimulus) -> Result<String, MacmError> {
        Ok(self.session.respond(&self.gateway, stimulus)?.response)
    }

    fn reset(&mut self) {
        self.session.reset();
    }

    fn transcript(&self) -> Vec<ChatMessage> {
        self.session
            .turns()
            .iter()
            .flat_map(|t| [ChatMessage::user(t.stimulus.clone()), ChatMessage::assistant(t.response.clone())])
            .collect()
    }
}
