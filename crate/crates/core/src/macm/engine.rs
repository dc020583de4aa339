use std::sync::{Arc, PoisonError, RwLock};

use serde::{Deserialize, Serialize};

use super::agents::{emotional_analysis, logical_analysis, reflect, retrieve_memories};
use super::build::{construct_record, BuildConfig};
use super::memory::{ContextItem, ItemKind, MemorySystem};
use super::record::{CapViolation, CappedText, LongTermStore, MemorySource};
use super::MacmError;
use crate::character::CharacterProfile;
use crate::llm::{bindings, ids, CallContext, ChatMessage, Gateway, GenerationParams, RenderedPrompt};
use crate::seed::derive;
use crate::simulacrum::{scenario_key, Stimulus};

/// Long-term memory shared between a session and its readers.
pub type SharedStore = Arc<RwLock<LongTermStore>>;

/// Which agents take part in a turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct AgentToggles {
    pub memory: bool,
    pub thinking: bool,
    pub emotion: bool,
}

impl Default for AgentToggles {
    fn default() -> Self {
        Self {
            memory: true,
            thinking: true,
            emotion: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct MacmConfig {
    pub working_capacity: usize,
    pub rehearsal_threshold: u32,
    /// Past turns replayed to the composer as chat history.
    pub history_window: usize,
    /// Run the reflection prompt to derive the retrieval query.
    pub reflection: bool,
    /// Prefix the composition prompt with the character's persona.
    pub persona_in_composition: bool,
    pub agents: AgentToggles,
    /// Parameters for the per-turn agents.
    pub params: GenerationParams,
    /// Used when rehearsal turns a past exchange into a record.
    pub construction: BuildConfig,
}

impl Default for MacmConfig {
    fn default() -> Self {
        Self {
            working_capacity: 8,
            rehearsal_threshold: 2,
            history_window: 4,
            reflection: false,
            persona_in_composition: true,
            agents: AgentToggles::default(),
            params: GenerationParams::evaluation(),
            construction: BuildConfig::default(),
        }
    }
}

impl MacmConfig {
    pub fn validate(&self) -> Result<(), MacmError> {
        if self.working_capacity == 0 {
            return Err(MacmError::InvalidConfig("working capacity must be at least 1".into()));
        }
        if self.rehearsal_threshold == 0 {
            return Err(MacmError::InvalidConfig("rehearsal threshold must be at least 1".into()));
        }
        self.params.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RetrievalTrace {
    pub skipped: bool,
    pub replies: Vec<String>,
    pub errors: Vec<String>,
    pub indices: Vec<String>,
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CompositionTrace {
    pub system: String,
    pub user: String,
    pub history: Vec<ChatMessage>,
}

/// Everything one turn produced, in pipeline order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TurnRecord {
    pub turn: usize,
    pub stimulus: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflection: Option<String>,
    pub query: String,
    pub retrieval: RetrievalTrace,
    pub memory_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thinking: Option<CappedText>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion: Option<CappedText>,
    pub composition: CompositionTrace,
    pub response: String,
    pub flags: Vec<String>,
    pub moved_to_short_term: Vec<u64>,
    pub recalled: Vec<u64>,
    pub rehearsed: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RehearsalOutcome {
    /// Indices of the new records.
    pub added: Vec<String>,
    /// Items left in short-term memory after a failed conversion.
    pub failed: Vec<(u64, String)>,
}

fn passage_for(item: &ContextItem) -> String {
    match &item.reply {
        Some(reply) => format!("Someone said to me: \"{}\"\n\nI answered: \"{}\"", item.text, reply),
        None => item.text.clone(),
    }
}

/// Converts the given short-term items into long-term records. Failures
/// leave the item where it is.
pub fn rehearse_items(
    items: Vec<ContextItem>,
    memory: &mut MemorySystem,
    store: &mut LongTermStore,
    gateway: &Gateway,
    profile: &CharacterProfile,
    config: &BuildConfig,
) -> RehearsalOutcome {
    let mut out = RehearsalOutcome::default();
    for item in items {
        let source = MemorySource::Rehearsal {
            item_id: item.id,
            turn: item.turn,
        };
        let drafted = construct_record(
            gateway,
            profile,
            &passage_for(&item),
            source,
            config,
            derive(config.seed, &[0x4e4, item.id]),
        );
        match drafted.and_then(|d| store.push(d).map(|r| r.index.clone())) {
            Ok(index) => {
                memory.mark_rehearsed(item.id);
                out.added.push(index);
            }
            Err(e) => {
                tracing::warn!(item = item.id, error = %e, "rehearsal failed, item kept in short-term memory");
                out.failed.push((item.id, e.to_string()));
            }
        }
    }
    out
}

/// Rehearses every short-term item that reached the access threshold.
pub fn rehearse(
    memory: &mut MemorySystem,
    store: &mut LongTermStore,
    gateway: &Gateway,
    profile: &CharacterProfile,
    config: &BuildConfig,
) -> RehearsalOutcome {
    let eligible = memory.eligible();
    rehearse_items(eligible, memory, store, gateway, profile, config)
}

/// One running conversation with a MACM simulacrum.
#[derive(Debug)]
pub struct MacmSession {
    profile: CharacterProfile,
    biography: String,
    store: SharedStore,
    memory: MemorySystem,
    config: MacmConfig,
    scenario: Option<String>,
    seed: u64,
    transcript: Vec<(String, String)>,
    turn_items: Vec<u64>,
    turns: Vec<TurnRecord>,
}

impl MacmSession {
    pub fn new(
        profile: CharacterProfile,
        biography: &str,
        store: LongTermStore,
        config: MacmConfig,
    ) -> Result<Self, MacmError> {
        Self::with_shared_store(profile, biography, Arc::new(RwLock::new(store)), config)
    }

    pub fn with_shared_store(
        profile: CharacterProfile,
        biography: &str,
        store: SharedStore,
        config: MacmConfig,
    ) -> Result<Self, MacmError> {
        config.validate()?;
        if store.read().unwrap_or_else(PoisonError::into_inner).is_empty() {
            return Err(MacmError::Precondition("long-term store is not built".into()));
        }
        Ok(Self {
            memory: MemorySystem::new(config.working_capacity, config.rehearsal_threshold),
            profile,
            biography: biography.to_string(),
            store,
            config,
            scenario: None,
            seed: 0,
            transcript: Vec::new(),
            turn_items: Vec::new(),
            turns: Vec::new(),
        })
    }

    pub fn with_scenario(mut self, scenario: Option<String>) -> Self {
        self.scenario = scenario;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn profile(&self) -> &CharacterProfile {
        &self.profile
    }

    pub fn config(&self) -> &MacmConfig {
        &self.config
    }

    pub fn memory(&self) -> &MemorySystem {
        &self.memory
    }

    pub fn turns(&self) -> &[TurnRecord] {
        &self.turns
    }

    pub fn shared_store(&self) -> SharedStore {
        self.store.clone()
    }

    pub fn store_snapshot(&self) -> LongTermStore {
        self.store.read().unwrap_or_else(PoisonError::into_inner).clone()
    }

    /// Forgets the conversation but keeps long-term memory.
    pub fn reset(&mut self) {
        self.memory = MemorySystem::new(self.config.working_capacity, self.config.rehearsal_threshold);
        self.transcript.clear();
        self.turn_items.clear();
        self.turns.clear();
    }

    fn history(&self) -> Vec<ChatMessage> {
        let start = self.transcript.len().saturating_sub(self.config.history_window);
        self.transcript[start..]
            .iter()
            .flat_map(|(s, r)| [ChatMessage::user(s.clone()), ChatMessage::assistant(r.clone())])
            .collect()
    }

    fn composition_prompt(&self, gateway: &Gateway, stimulus: &str, memory: &str, thinking: &str, emotion: &str) -> Result<RenderedPrompt, MacmError> {
        let values = bindings([
            ("query", stimulus.to_string()),
            ("memory", memory.to_string()),
            ("thinking", thinking.to_string()),
            ("emotion", emotion.to_string()),
        ]);
        let mut prompt = gateway.render(ids::COLLABORATIVE_COGNITION, &values)?;
        if self.config.persona_in_composition {
            let persona = gateway.render(
                ids::NAIVE_SIMULACRA,
                &bindings([
                    ("character_name", self.profile.name.clone()),
                    ("basic_information", self.profile.basic_information()),
                    ("introduction", self.biography.clone()),
                ]),
            )?;
            prompt.system = format!("{}\n\n{}", persona.system.trim_end(), prompt.system.trim_start());
        }
        if prompt.user.trim().is_empty() {
            prompt.user = stimulus.to_string();
        }
        Ok(prompt)
    }

    /// Runs one full turn.
    pub fn respond(&mut self, gateway: &Gateway, stimulus: &Stimulus) -> Result<TurnRecord, MacmError> {
        if stimulus.text.trim().is_empty() {
            return Err(MacmError::EmptyQuery);
        }
        let turn = self.turns.len() + 1;
        let seed = derive(self.seed, &[turn as u64]);
        let scenario = scenario_key(self.scenario.as_deref(), stimulus.phase.as_deref());
        let ctx = |salt: u64| {
            CallContext::seeded(derive(seed, &[salt]))
                .with_scenario(scenario.clone())
                .with_extra(&self.profile.attribute_bindings())
                .with_extra(&stimulus.context)
        };
        let params = self.config.params;
        let mut flags = Vec::new();
        let mut moved = Vec::new();
        let mut recalled = Vec::new();
        let mut violations: Vec<CapViolation> = Vec::new();

        // Recent exchanges are needed again; pull them back from short-term memory.
        let window_start = self.turn_items.len().saturating_sub(self.config.history_window);
        for &id in &self.turn_items[window_start..] {
            if self.memory.short_term.find(id).is_some() {
                if let Some(out) = self.memory.recall(id, turn) {
                    recalled.push(id);
                    moved.extend(out);
                }
            }
        }

        let reflection = if self.config.reflection {
            let r = reflect(&stimulus.text, &self.profile, gateway, &ctx(1), &params)?;
            moved.extend(self.memory.add(ItemKind::Reflection, turn, &r).1);
            Some(r)
        } else {
            None
        };
        let query = reflection.clone().unwrap_or_else(|| stimulus.text.clone());

        let mut retrieval = RetrievalTrace::default();
        let mut memory_text = String::new();
        if self.config.agents.memory {
            let store = self.store_snapshot();
            let mut found = None;
            for attempt in 0..2u64 {
                match retrieve_memories(&query, &store, gateway, &ctx(10 + attempt), &params) {
                    Ok(r) => {
                        retrieval.replies.push(r.reply.clone());
                        found = Some(r);
                        break;
                    }
                    Err(e @ (MacmError::Unparseable(_) | MacmError::IndexOutOfRange { .. })) => {
                        if let MacmError::Unparseable(reply) = &e {
                            retrieval.replies.push(reply.clone());
                        }
                        retrieval.errors.push(e.to_string());
                    }
                    Err(e) => return Err(e),
                }
            }
            match found {
                Some(r) => {
                    for record in &r.records {
                        retrieval.indices.push(record.index.clone());
                        if self.memory.find_working_memory(&record.index).is_some() {
                            continue;
                        }
                        if let Some(id) = self.memory.find_short_term_memory(&record.index) {
                            if let Some(out) = self.memory.recall(id, turn) {
                                recalled.push(id);
                                moved.extend(out);
                            }
                            continue;
                        }
                        let (_, out) = self.memory.add_item(
                            ItemKind::RetrievedMemory,
                            turn,
                            &record.render(),
                            None,
                            Some(record.index.clone()),
                        );
                        moved.extend(out);
                    }
                    memory_text = r.records.iter().map(|m| m.render()).collect::<Vec<_>>().join("\n\n");
                }
                None => {
                    retrieval.degraded = true;
                    flags.push("retrieval-degraded".to_string());
                    tracing::warn!(turn, "memory retrieval failed twice, answering without memories");
                }
            }
        } else {
            retrieval.skipped = true;
        }

        let thinking = if self.config.agents.thinking {
            let t = logical_analysis(&query, &self.profile, &self.biography, gateway, &ctx(20), &params)?;
            moved.extend(self.memory.add(ItemKind::Thought, turn, &t.text).1);
            violations.extend(t.violation.clone());
            Some(t)
        } else {
            None
        };
        let emotion = if self.config.agents.emotion {
            let e = emotional_analysis(&query, &self.profile, gateway, &ctx(21), &params)?;
            moved.extend(self.memory.add(ItemKind::Emotion, turn, &e.text).1);
            violations.extend(e.violation.clone());
            Some(e)
        } else {
            None
        };
        for v in &violations {
            flags.push(format!("{}-over-cap:{}/{}", v.facet, v.words, v.cap));
        }

        let prompt = self.composition_prompt(
            gateway,
            &stimulus.text,
            &memory_text,
            thinking.as_ref().map_or("", |t| t.text.as_str()),
            emotion.as_ref().map_or("", |e| e.text.as_str()),
        )?;
        let history = self.history();
        let response = gateway.complete(&prompt, &history, &ctx(30), &params)?.trim().to_string();

        let (turn_id, out) = self.memory.add_item(
            ItemKind::Turn,
            turn,
            &stimulus.text,
            Some(response.clone()),
            None,
        );
        moved.extend(out);
        self.turn_items.push(turn_id);
        self.transcript.push((stimulus.text.clone(), response.clone()));
        moved.extend(self.memory.expire(turn, |i| i.kind == ItemKind::RetrievedMemory));

        let rehearsal = {
            let mut store = self.store.write().unwrap_or_else(PoisonError::into_inner);
            rehearse(&mut self.memory, &mut store, gateway, &self.profile, &self.config.construction)
        };
        for (id, e) in &rehearsal.failed {
            flags.push(format!("rehearsal-failed:{id}:{e}"));
        }

        let record = TurnRecord {
            turn,
            stimulus: stimulus.text.clone(),
            phase: stimulus.phase.clone(),
            reflection,
            query,
            retrieval,
            memory_text,
            thinking,
            emotion,
            composition: CompositionTrace {
                system: prompt.system,
                user: prompt.user,
                history,
            },
            response,
            flags,
            moved_to_short_term: moved,
            recalled,
            rehearsed: rehearsal.added,
        };
        self.turns.push(record.clone());
        Ok(record)
    }

    /// End of session: everything goes to short-term memory and every past
    /// exchange is rehearsed regardless of its access count.
    pub fn flush(&mut self, gateway: &Gateway) -> RehearsalOutcome {
        let turn = self.turns.len();
        self.memory.flush_working(turn);
        let items = self.memory.all_short_term_turns();
        let mut store = self.store.write().unwrap_or_else(PoisonError::into_inner);
        rehearse_items(items, &mut self.memory, &mut store, gateway, &self.profile, &self.config.construction)
    }
}
