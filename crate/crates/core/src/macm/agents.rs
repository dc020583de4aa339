use std::sync::LazyLock;

use regex::Regex;

use super::record::{enforce_cap, CappedText, LongTermStore, MemoryRecord, ANALYSIS_CAP};
use super::MacmError;
use crate::character::CharacterProfile;
use crate::llm::{bindings, ids, CallContext, Gateway, GenerationParams};

static INDEX_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b\d{3}\b").expect("valid regex"));

pub const MAX_RETRIEVED: usize = 2;

/// Distinct three-digit indices in reply order, at most two.
pub fn parse_memory_indices(reply: &str) -> Result<Vec<String>, MacmError> {
    let mut out: Vec<String> = Vec::new();
    for m in INDEX_RE.find_iter(reply) {
        let idx = m.as_str().to_string();
        if !out.contains(&idx) {
            out.push(idx);
        }
        if out.len() == MAX_RETRIEVED {
            break;
        }
    }
    if out.is_empty() {
        return Err(MacmError::Unparseable(reply.to_string()));
    }
    Ok(out)
}

/// Resolves a Memory-Agent reply against the store.
pub fn resolve_reply(reply: &str, store: &LongTermStore) -> Result<Vec<MemoryRecord>, MacmError> {
    parse_memory_indices(reply)?
        .into_iter()
        .map(|idx| {
            store.get(&idx).cloned().ok_or(MacmError::IndexOutOfRange {
                index: idx,
                len: store.len(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieval {
    pub reply: String,
    pub records: Vec<MemoryRecord>,
}

pub fn retrieve_memories(
    query: &str,
    store: &LongTermStore,
    gateway: &Gateway,
    ctx: &CallContext,
    params: &GenerationParams,
) -> Result<Retrieval, MacmError> {
    if store.is_empty() {
        return Err(MacmError::Precondition("long-term store is empty".into()));
    }
    if query.trim().is_empty() {
        return Err(MacmError::EmptyQuery);
    }
    let reply = gateway.generate(
        ids::MEMORY_AGENT,
        &bindings([
            ("character_name", store.character.clone()),
            ("content", store.summary_index_json()),
            ("query", query.to_string()),
        ]),
        ctx,
        params,
    )?;
    let records = resolve_reply(&reply, store)?;
    Ok(Retrieval { reply, records })
}

fn analysis(
    id: &str,
    facet: &str,
    values: crate::llm::Bindings,
    query: &str,
    gateway: &Gateway,
    ctx: &CallContext,
    params: &GenerationParams,
) -> Result<CappedText, MacmError> {
    if query.trim().is_empty() {
        return Err(MacmError::EmptyQuery);
    }
    let text = gateway.generate(id, &values, ctx, params)?;
    Ok(enforce_cap(facet, &text, ANALYSIS_CAP))
}

/// The Thinking Agent: a short first-person thought about the query.
pub fn logical_analysis(
    query: &str,
    profile: &CharacterProfile,
    biography: &str,
    gateway: &Gateway,
    ctx: &CallContext,
    params: &GenerationParams,
) -> Result<CappedText, MacmError> {
    let values = bindings([
        ("character_name", profile.name.clone()),
        ("basic_information", profile.basic_information()),
        ("character_biography", biography.to_string()),
        ("query", query.to_string()),
    ]);
    analysis(ids::LOGICAL_ANALYSIS, "thinking", values, query, gateway, ctx, params)
}

/// The Emotion Agent: a short first-person feeling about the query.
pub fn emotional_analysis(
    query: &str,
    profile: &CharacterProfile,
    gateway: &Gateway,
    ctx: &CallContext,
    params: &GenerationParams,
) -> Result<CappedText, MacmError> {
    let values = bindings([
        ("character_name", profile.name.clone()),
        ("basic_information", profile.basic_information()),
        ("query", query.to_string()),
    ]);
    analysis(ids::EMOTIONAL_ANALYSIS, "emotion", values, query, gateway, ctx, params)
}

/// Optional Top-Agent reflection: distils the stimulus into a retrieval query.
pub fn reflect(
    stimulus: &str,
    profile: &CharacterProfile,
    gateway: &Gateway,
    ctx: &CallContext,
    params: &GenerationParams,
) -> Result<String, MacmError> {
    if stimulus.trim().is_empty() {
        return Err(MacmError::EmptyQuery);
    }
    let text = gateway.generate(
        ids::REFLECTION,
        &bindings([("character_name", profile.name.clone()), ("query", stimulus.to_string())]),
        ctx,
        params,
    )?;
    Ok(text.trim().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_parsing() {
        assert_eq!(parse_memory_indices(r#"The answer is "009"."#).unwrap(), vec!["009"]);
        assert_eq!(parse_memory_indices("001 and 003").unwrap(), vec!["001", "003"]);
        assert_eq!(parse_memory_indices("001, 001, 002, 003").unwrap(), vec!["001", "002"]);
        assert!(matches!(parse_memory_indices("1, 2, 3, 4"), Err(MacmError::Unparseable(_))));
        assert!(parse_memory_indices("1234").is_err());
    }

    #[test]
    fn out_of_range() {
        let store = LongTermStore::new("x");
        assert!(matches!(
            resolve_reply("004", &store),
            Err(MacmError::IndexOutOfRange { len: 0, .. })
        ));
    }
}
