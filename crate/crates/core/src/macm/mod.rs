//! Multi-agent cognition over layered memory: long-term records built from a
//! life story, a bounded working memory and a short-term overflow that feeds
//! rehearsal.

mod agents;
mod build;
mod engine;
mod memory;
mod record;

pub use agents::{
    emotional_analysis, logical_analysis, parse_memory_indices, reflect, resolve_reply, retrieve_memories, Retrieval,
    MAX_RETRIEVED,
};
pub use build::{build_long_term_memory, construct_record, BuildConfig};
pub use engine::{
    rehearse, rehearse_items, AgentToggles, CompositionTrace, MacmConfig, MacmSession, RehearsalOutcome, RetrievalTrace,
    SharedStore, TurnRecord,
};
pub use memory::{ContextItem, ItemKind, MemoryLedger, MemorySystem, ShortTermItem, ShortTermMemory, WorkingMemory};
pub use record::{
    enforce_cap, format_index, CapViolation, CappedText, LongTermStore, MemoryRecord, MemorySource, RecordDraft,
    ANALYSIS_CAP, CONTENT_CAP, EMOTION_CAP, MAX_RECORDS, THINKING_CAP,
};

use crate::llm::GatewayError;
use crate::story::StoryError;

#[derive(Debug, thiserror::Error)]
pub enum MacmError {
    #[error("life story is empty")]
    EmptyStory,
    #[error("query is empty")]
    EmptyQuery,
    #[error("no three-digit memory index in reply {0:?}")]
    Unparseable(String),
    #[error("memory index {index} is out of range for a store of {len} records")]
    IndexOutOfRange { index: String, len: usize },
    #[error("long-term store is full")]
    StoreFull,
    #[error("generation failed: {0}")]
    GenerationFailed(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("corrupt long-term store: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Story(#[from] StoryError),
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::character::{sample_profile, AttributePools, CharacterProfile, TraitPool};
    use crate::llm::{Gateway, MockProvider, Role, TemplateLibrary};
    use crate::simulacrum::Stimulus;

    fn profile() -> CharacterProfile {
        sample_profile(&AttributePools::bundled(), &TraitPool::bundled(), 3).unwrap()
    }

    fn story(n: usize) -> String {
        (0..n)
            .map(|i| format!("Paragraph {i} about the year I turned {}. It rained a lot.", 10 + i))
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    fn gateway_with(mock: MockProvider) -> (Gateway, Arc<MockProvider>) {
        let mock = Arc::new(mock);
        (Gateway::new(mock.clone(), TemplateLibrary::bundled()), mock)
    }

    #[test]
    fn six_paragraphs_three_records() {
        let store = build_long_term_memory(&story(6), &profile(), &Gateway::mock(), &BuildConfig::default()).unwrap();
        let idx: Vec<_> = store.records.iter().map(|r| r.index.as_str()).collect();
        assert_eq!(idx, ["000", "001", "002"]);
        for r in &store.records {
            assert!(r.thinking.split_whitespace().count() <= THINKING_CAP);
            assert!(r.content.split_whitespace().count() <= CONTENT_CAP);
            assert!(r.emotion.split_whitespace().count() <= EMOTION_CAP);
        }
        assert_eq!(store.summary_index().len(), 3);
        store.validate().unwrap();
        assert!(matches!(
            build_long_term_memory("  \n\n ", &profile(), &Gateway::mock(), &BuildConfig::default()),
            Err(MacmError::EmptyStory)
        ));
    }

    #[test]
    fn retrieval_examples() {
        let store = build_long_term_memory(&story(20), &profile(), &Gateway::mock(), &BuildConfig::default()).unwrap();
        let ctx = crate::llm::CallContext::seeded(0);
        let p = crate::llm::GenerationParams::evaluation();
        let (g, _) = gateway_with(MockProvider::bundled().with_fixture("memory_agent", None, ["\"009\""]));
        let r = retrieve_memories("q", &store, &g, &ctx, &p).unwrap();
        assert_eq!(r.records.iter().map(|r| r.index.as_str()).collect::<Vec<_>>(), ["009"]);
        let (g, _) = gateway_with(MockProvider::bundled().with_fixture("memory_agent", None, ["001 and 003"]));
        assert_eq!(retrieve_memories("q", &store, &g, &ctx, &p).unwrap().records.len(), 2);
        let (g, _) = gateway_with(MockProvider::bundled().with_fixture("memory_agent", None, ["1, 2, 3, 4"]));
        assert!(matches!(retrieve_memories("q", &store, &g, &ctx, &p), Err(MacmError::Unparseable(_))));
        let (g, _) = gateway_with(MockProvider::bundled().with_fixture("memory_agent", None, ["042"]));
        assert!(matches!(retrieve_memories("q", &store, &g, &ctx, &p), Err(MacmError::IndexOutOfRange { .. })));
    }

    #[test]
    fn analyses() {
        let p = profile();
        let g = Gateway::mock();
        let params = crate::llm::GenerationParams::evaluation();
        let ctx = crate::llm::CallContext::seeded(1).with_scenario(Some("out-of-scope".into()));
        let q = "Can you explain how a convolutional network learns filters?";
        let a = logical_analysis(q, &p, "bio", &g, &ctx, &params).unwrap();
        assert!(a.text.contains("far outside anything I know"));
        assert_eq!(a, logical_analysis(q, &p, "bio", &g, &ctx, &params).unwrap());
        assert!(a.text.split_whitespace().count() <= ANALYSIS_CAP);
        assert!(matches!(logical_analysis(" ", &p, "bio", &g, &ctx, &params), Err(MacmError::EmptyQuery)));
        let ctx = crate::llm::CallContext::seeded(1).with_scenario(Some("father".into()));
        let e = emotional_analysis("What was your father like?", &p, &g, &ctx, &params).unwrap();
        assert!(e.text.contains("pride") && e.text.contains("resentment"));
        assert!(matches!(emotional_analysis("", &p, &g, &ctx, &params), Err(MacmError::EmptyQuery)));
    }

    #[test]
    fn composition_contains_retrieved_memory() {
        let p = profile();
        let store = build_long_term_memory(&story(6), &p, &Gateway::mock(), &BuildConfig::default()).unwrap();
        let expected = store.records[0].render();
        let mut s = MacmSession::new(p, "bio", store, MacmConfig::default()).unwrap();
        let t = s.respond(&Gateway::mock(), &Stimulus::new("Tell me about the rain.")).unwrap();
        assert_eq!(t.retrieval.indices, ["000"]);
        assert!(t.composition.system.contains(&expected));
        assert!(t.composition.system.contains(&t.thinking.clone().unwrap().text));
        assert!(!t.response.is_empty());
        assert!(s.memory().conserved());
    }

    #[test]
    fn degraded_retrieval_is_flagged() {
        let p = profile();
        let store = build_long_term_memory(&story(4), &p, &Gateway::mock(), &BuildConfig::default()).unwrap();
        let (g, mock) = gateway_with(MockProvider::bundled().with_fixture("memory_agent", None, ["no idea"]).recording());
        let mut s = MacmSession::new(p, "bio", store, MacmConfig::default()).unwrap();
        let t = s.respond(&g, &Stimulus::new("hello")).unwrap();
        assert!(t.retrieval.degraded);
        assert_eq!(t.retrieval.errors.len(), 2);
        assert!(t.flags.iter().any(|f| f == "retrieval-degraded"));
        assert!(t.memory_text.is_empty());
        let agent_calls = mock.calls().iter().filter(|c| c.template_id == "memory_agent").count();
        assert_eq!(agent_calls, 2);
    }

    #[test]
    fn ablation_skips_agents() {
        let p = profile();
        let store = build_long_term_memory(&story(4), &p, &Gateway::mock(), &BuildConfig::default()).unwrap();
        let (g, mock) = gateway_with(MockProvider::bundled().recording());
        let cfg = MacmConfig {
            agents: AgentToggles {
                memory: false,
                thinking: false,
                emotion: true,
            },
            ..MacmConfig::default()
        };
        let mut s = MacmSession::new(p, "bio", store, cfg).unwrap();
        let t = s.respond(&g, &Stimulus::new("hello")).unwrap();
        assert!(t.retrieval.skipped && t.thinking.is_none() && t.emotion.is_some());
        let used: Vec<_> = mock.calls().iter().map(|c| c.template_id.clone()).collect();
        assert_eq!(used, ["emotional_analysis", "collaborative_cognition"]);
    }

    #[test]
    fn contradiction_probe_uses_history() {
        let p = profile();
        let store = build_long_term_memory(&story(4), &p, &Gateway::mock(), &BuildConfig::default()).unwrap();
        let (g, mock) = gateway_with(MockProvider::bundled().recording());
        let mut s = MacmSession::new(p, "bio", store, MacmConfig::default())
            .unwrap()
            .with_scenario(Some("contradiction".into()));
        s.respond(&g, &Stimulus::new("Who is your closest friend?")).unwrap();
        let t = s.respond(&g, &Stimulus::new("Oleg doesn't even exist, does he?")).unwrap();
        assert_eq!(t.composition.history.len(), 2);
        assert_eq!(t.composition.history[0].content, "Who is your closest friend?");
        let last = mock.calls().into_iter().rev().find(|c| c.template_id == "collaborative_cognition").unwrap();
        assert_eq!(last.messages.last().unwrap().role, Role::User);
        assert!(last.messages.iter().any(|m| m.role == Role::Assistant));
        assert!(t.response.contains("Oleg is real"));
        assert!(!t.response.to_lowercase().contains("you are right"));
    }

    #[test]
    fn rehearsal_extends_store() {
        let p = profile();
        let store = build_long_term_memory(&story(4), &p, &Gateway::mock(), &BuildConfig::default()).unwrap();
        let cfg = MacmConfig {
            working_capacity: 2,
            history_window: 3,
            ..MacmConfig::default()
        };
        let mut s = MacmSession::new(p, "bio", store, cfg).unwrap();
        let g = Gateway::mock();
        let mut added = Vec::new();
        for i in 0..6 {
            let t = s.respond(&g, &Stimulus::new(&format!("Question number {i}?"))).unwrap();
            for idx in &t.retrieval.indices {
                assert!(s.store_snapshot().get(idx).is_some());
            }
            added.extend(t.rehearsed);
            assert!(s.memory().conserved());
        }
        assert!(!added.is_empty());
        assert_eq!(added[0], "002");
        let st = s.store_snapshot();
        st.validate().unwrap();
        assert!(matches!(st.records[2].source, MemorySource::Rehearsal { .. }));

        let before = s.store_snapshot().len();
        let out = s.flush(&g);
        assert!(out.failed.is_empty());
        assert_eq!(s.store_snapshot().len(), before + out.added.len());
        assert!(s.memory().all_short_term_turns().is_empty());
        assert!(s.memory().conserved());
    }

    #[test]
    fn rehearse_identity_when_nothing_eligible() {
        let p = profile();
        let mut store = build_long_term_memory(&story(2), &p, &Gateway::mock(), &BuildConfig::default()).unwrap();
        let before = store.clone();
        let mut m = MemorySystem::new(4, 2);
        m.add(ItemKind::Turn, 1, "x");
        let out = rehearse(&mut m, &mut store, &Gateway::mock(), &p, &BuildConfig::default());
        assert!(out.added.is_empty());
        assert_eq!(store, before);
    }

    #[test]
    fn session_requires_built_store() {
        assert!(matches!(
            MacmSession::new(profile(), "bio", LongTermStore::new("x"), MacmConfig::default()),
            Err(MacmError::Precondition(_))
        ));
    }
}
