use serde::{Deserialize, Serialize};

use super::record::{enforce_cap, LongTermStore, MemorySource, RecordDraft, CONTENT_CAP, EMOTION_CAP, THINKING_CAP};
use super::MacmError;
use crate::character::CharacterProfile;
use crate::llm::{bindings, ids, CallContext, Gateway, GenerationParams};
use crate::seed::derive;
use crate::story::{chunk_story, paragraphs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct BuildConfig {
    /// Paragraphs per memory chunk.
    pub granularity: usize,
    pub params: GenerationParams,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            granularity: 2,
            params: GenerationParams::data_generation(),
            seed: 0,
            scenario: None,
        }
    }
}

/// Generates the summary and the three facets for one passage.
pub fn construct_record(
    gateway: &Gateway,
    profile: &CharacterProfile,
    passage: &str,
    source: MemorySource,
    config: &BuildConfig,
    seed: u64,
) -> Result<RecordDraft, MacmError> {
    let values = bindings([
        ("character_name", profile.name.clone()),
        ("basic_information", profile.basic_information()),
        ("chunk", passage.to_string()),
    ]);
    let extra = profile.attribute_bindings();
    let call = |id: &str, salt: u64| -> Result<String, MacmError> {
        let ctx = CallContext::seeded(derive(seed, &[salt]))
            .with_scenario(config.scenario.clone())
            .with_extra(&extra);
        Ok(gateway.generate(id, &values, &ctx, &config.params)?)
    };
    let content = call(ids::MEMORY_CONTENT, 1)?;
    let thinking = call(ids::THINKING_MEMORY, 2)?;
    let emotion = call(ids::EMOTION_MEMORY, 3)?;
    let summary = gateway.generate(
        ids::SUMMARY,
        &bindings([("text", passage.to_string())]),
        &CallContext::seeded(derive(seed, &[4])).with_scenario(config.scenario.clone()),
        &GenerationParams::evaluation(),
    )?;
    Ok(RecordDraft {
        summary: summary.trim().to_string(),
        content: enforce_cap("content", &content, CONTENT_CAP),
        thinking: enforce_cap("thinking", &thinking, THINKING_CAP),
        emotion: enforce_cap("emotion", &emotion, EMOTION_CAP),
        source,
    })
}

/// One record per chunk of `granularity` paragraphs, in story order.
pub fn build_long_term_memory(
    life_story: &str,
    profile: &CharacterProfile,
    gateway: &Gateway,
    config: &BuildConfig,
) -> Result<LongTermStore, MacmError> {
    if paragraphs(life_story).is_empty() {
        return Err(MacmError::EmptyStory);
    }
    let chunks = chunk_story(life_story, config.granularity)?;
    let mut store = LongTermStore::new(&profile.slug());
    for chunk in &chunks {
        let source = MemorySource::Chunk {
            chunk_index: chunk.index,
            paragraph_start: chunk.paragraph_start,
            paragraph_end: chunk.paragraph_end,
        };
        let draft = construct_record(
            gateway,
            profile,
            &chunk.text,
            source,
            config,
            derive(config.seed, &[chunk.index as u64]),
        )?;
        store.push(draft)?;
    }
    tracing::info!(character = %store.character, records = store.len(), "long-term memory built");
    Ok(store)
}
