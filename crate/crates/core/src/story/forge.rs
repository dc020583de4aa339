use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::chunk::{chunk_story, join_chunks, normalize_story, word_count};
use super::review::{GateOutcome, ReviewDecision, ReviewGate, ReviewKind, ReviewMode, ReviewRequest, Verdict};
use super::score::{score_all, select_top_k, ChunkScore, ScoreWeights};
use super::StoryError;
use crate::character::CharacterProfile;
use crate::llm::{bindings, ids, Bindings, CallContext, EmbeddingVector, Gateway, GenerationParams};
use crate::seed::derive;

const SEED_BIOGRAPHY: u64 = 0xb10;
const SEED_EXPANSION: u64 = 0xe4a;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ForgeConfig {
    pub iterations: usize,
    pub weights: ScoreWeights,
    /// Paragraphs per chunk.
    pub granularity: usize,
    pub review_mode: ReviewMode,
    /// Chunks expanded per iteration.
    pub top_k: usize,
    /// Queued-review timeout; `None` means the mode default.
    pub review_timeout_secs: Option<u64>,
    pub biography_word_cap: usize,
    pub biography_attempts: u32,
    /// Regenerate verdicts allowed per expansion before giving up.
    pub max_regenerations: u32,
}

impl Default for ForgeConfig {
    fn default() -> Self {
        Self {
            iterations: 50,
            weights: ScoreWeights::default(),
            granularity: 2,
            review_mode: ReviewMode::AutoApprove,
            top_k: 1,
            review_timeout_secs: None,
            biography_word_cap: 1000,
            biography_attempts: 3,
            max_regenerations: 5,
        }
    }
}

impl ForgeConfig {
    pub fn with_iterations(mut self, t: usize) -> Self {
        self.iterations = t;
        self
    }

    pub fn validate(&self) -> Result<(), StoryError> {
        if self.iterations == 0 {
            return Err(StoryError::InvalidConfig("iterations must be >= 1".into()));
        }
        if self.granularity == 0 {
            return Err(StoryError::InvalidGranularity);
        }
        if self.top_k == 0 {
            return Err(StoryError::InvalidConfig("topK must be >= 1".into()));
        }
        if self.biography_attempts == 0 {
            return Err(StoryError::InvalidConfig("biographyAttempts must be >= 1".into()));
        }
        self.weights.validate()
    }

    /// Seconds a queued review may stay pending.
    pub fn effective_review_timeout(&self) -> Option<u64> {
        match (self.review_timeout_secs, self.review_mode) {
            (Some(t), _) => Some(t),
            (None, ReviewMode::Queued) => Some(7 * 24 * 3600),
            (None, _) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Biography {
    pub text: String,
    pub word_count: usize,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChunkTrace {
    pub index: usize,
    pub paragraph_start: usize,
    pub paragraph_end: usize,
    pub summary: String,
    pub embedding: EmbeddingVector,
    pub summary_embedding: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Attempt {
    pub attempt: u32,
    pub candidate: String,
    pub decision: ReviewDecision,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Expansion {
    pub chunk_index: usize,
    pub original: String,
    pub attempts: Vec<Attempt>,
    /// The text that replaced the chunk.
    pub inserted: String,
}

/// One journal line: everything needed to audit and replay an iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IterationRecord {
    pub iteration: usize,
    pub seed: u64,
    pub granularity: usize,
    pub weights: ScoreWeights,
    pub words_before: usize,
    pub words_after: usize,
    pub story_summary: String,
    pub story_summary_embedding: EmbeddingVector,
    pub chunks: Vec<ChunkTrace>,
    pub scores: Vec<ChunkScore>,
    /// Expanded chunk indices, best first.
    pub chosen: Vec<usize>,
    pub expansions: Vec<Expansion>,
}

impl IterationRecord {
    pub fn chosen_index(&self) -> usize {
        self.chosen[0]
    }

    /// Applies this record to the story it was produced from.
    pub fn apply(&self, story: &str) -> Result<String, StoryError> {
        let chunks = chunk_story(story, self.granularity)?;
        if chunks.len() != self.chunks.len() {
            return Err(StoryError::Replay(format!(
                "iteration {}: story has {} chunks, record has {}",
                self.iteration,
                chunks.len(),
                self.chunks.len()
            )));
        }
        let mut texts: Vec<String> = chunks.into_iter().map(|c| c.text).collect();
        for e in &self.expansions {
            let slot = texts.get_mut(e.chunk_index).ok_or_else(|| {
                StoryError::Replay(format!("iteration {}: chunk {} out of range", self.iteration, e.chunk_index))
            })?;
            if *slot != e.original {
                return Err(StoryError::Replay(format!(
                    "iteration {}: chunk {} text differs from the journal",
                    self.iteration, e.chunk_index
                )));
            }
            *slot = e.inserted.clone();
        }
        Ok(join_chunks(&texts))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LifeStory {
    pub character: String,
    pub seed: u64,
    pub biography: Biography,
    pub text: String,
    pub iterations: Vec<IterationRecord>,
}

impl LifeStory {
    pub fn word_count(&self) -> usize {
        word_count(&self.text)
    }

    /// Folds the journal over the biography.
    pub fn replay(&self) -> Result<String, StoryError> {
        replay_journal(&self.biography.text, &self.iterations)
    }
}

pub fn replay_journal(biography: &str, records: &[IterationRecord]) -> Result<String, StoryError> {
    let mut story = normalize_story(biography);
    for r in records {
        story = r.apply(&story)?;
    }
    Ok(story)
}

#[derive(Debug, Clone, PartialEq)]
pub enum IterationOutcome {
    Done { record: IterationRecord, story: String },
    Parked(ReviewRequest),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForgeProgress {
    Complete(LifeStory),
    /// Stopped at a pending review; `story` holds the iterations so far.
    Parked { story: LifeStory, request: ReviewRequest },
}

/// Summaries and embeddings keyed by exact text, so unchanged chunks are not
/// re-summarized.
#[derive(Debug, Default, Clone)]
pub struct SummaryCache {
    summaries: HashMap<String, String>,
    embeddings: HashMap<String, EmbeddingVector>,
}

impl SummaryCache {
    pub fn len(&self) -> usize {
        self.summaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.summaries.is_empty()
    }
}

pub struct Forge<'g> {
    gateway: &'g Gateway,
    config: ForgeConfig,
    cache: SummaryCache,
    scenario: Option<String>,
}

impl<'g> Forge<'g> {
    pub fn new(gateway: &'g Gateway, config: ForgeConfig) -> Result<Self, StoryError> {
        config.validate()?;
        Ok(Self {
            gateway,
            config,
            cache: SummaryCache::default(),
            scenario: None,
        })
    }

    /// Mock scenario key for every call.
    pub fn with_scenario(mut self, scenario: Option<String>) -> Self {
        self.scenario = scenario;
        self
    }

    pub fn config(&self) -> &ForgeConfig {
        &self.config
    }

    pub fn cache(&self) -> &SummaryCache {
        &self.cache
    }

    fn ctx(&self, seed: u64, profile: &CharacterProfile) -> CallContext {
        CallContext::seeded(seed)
            .with_scenario(self.scenario.clone())
            .with_extra(&profile.attribute_bindings())
    }

    pub fn generate_biography(&self, profile: &CharacterProfile, seed: u64) -> Result<Biography, StoryError> {
        let values = bindings([
            ("character_name", profile.name.clone()),
            ("basic_information", profile.basic_information()),
        ]);
        let mut last = 0;
        for attempt in 0..self.config.biography_attempts {
            let ctx = self.ctx(derive(seed, &[SEED_BIOGRAPHY, attempt as u64]), profile);
            let text = self
                .gateway
                .generate(ids::BIOGRAPHY, &values, &ctx, &GenerationParams::data_generation())?;
            let text = normalize_story(&text);
            let words = word_count(&text);
            if words > 0 && words <= self.config.biography_word_cap {
                return Ok(Biography {
                    text,
                    word_count: words,
                    attempts: attempt + 1,
                });
            }
            tracing::warn!(attempt, words, cap = self.config.biography_word_cap, "biography rejected, regenerating");
            last = words;
        }
        Err(StoryError::GenerationFailed {
            what: "biography".into(),
            attempts: self.config.biography_attempts,
            reason: format!("last draft had {last} words (cap {})", self.config.biography_word_cap),
        })
    }

    fn summarize(&mut self, text: &str) -> Result<String, StoryError> {
        if let Some(s) = self.cache.summaries.get(text) {
            return Ok(s.clone());
        }
        let ctx = CallContext::seeded(0).with_scenario(self.scenario.clone());
        let s = self.gateway.generate(
            ids::SUMMARY,
            &bindings([("text", text)]),
            &ctx,
            &GenerationParams::evaluation(),
        )?;
        self.cache.summaries.insert(text.to_string(), s.clone());
        Ok(s)
    }

    fn embed(&mut self, text: &str) -> Result<EmbeddingVector, StoryError> {
        if let Some(v) = self.cache.embeddings.get(text) {
            return Ok(v.clone());
        }
        let v = self.gateway.embed(text)?;
        self.cache.embeddings.insert(text.to_string(), v.clone());
        Ok(v)
    }

    /// Chunks and scores `story` and expands the best chunk(s) through the
    /// review gate.
    pub fn run_iteration(
        &mut self,
        story: &str,
        profile: &CharacterProfile,
        gate: &mut dyn ReviewGate,
        iteration: usize,
        seed: u64,
    ) -> Result<IterationOutcome, StoryError> {
        let story = normalize_story(story);
        let chunks = chunk_story(&story, self.config.granularity)?;
        let story_summary = self.summarize(&story)?;
        let story_summary_embedding = self.embed(&story_summary)?;
        let mut traces = Vec::with_capacity(chunks.len());
        for c in &chunks {
            let summary = self.summarize(&c.text)?;
            traces.push(ChunkTrace {
                index: c.index,
                paragraph_start: c.paragraph_start,
                paragraph_end: c.paragraph_end,
                embedding: self.embed(&c.text)?,
                summary_embedding: self.embed(&summary)?,
                summary,
            });
        }
        let embs: Vec<&[f64]> = traces.iter().map(|t| t.embedding.as_slice()).collect();
        let sums: Vec<&[f64]> = traces.iter().map(|t| t.summary_embedding.as_slice()).collect();
        let scores = score_all(&embs, &sums, story_summary_embedding.as_slice(), &self.config.weights)?;
        let chosen = select_top_k(&scores, self.config.top_k)?;

        let mut texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
        let mut expansions = Vec::new();
        for &idx in &chosen {
            let original = chunks[idx].text.clone();
            let mut attempts = Vec::new();
            let mut attempt = 0u32;
            let inserted = loop {
                let mut request = ReviewRequest {
                    kind: ReviewKind::StoryIteration,
                    character: profile.slug(),
                    iteration,
                    attempt,
                    chunk_index: Some(idx),
                    original: original.clone(),
                    candidate: String::new(),
                    context: story.clone(),
                };
                request.candidate = match gate.prior_candidate(&request.task_id()) {
                    Some(c) => c,
                    None => self.expand(&story, &original, profile, derive(seed, &[SEED_EXPANSION, iteration as u64, idx as u64, attempt as u64]))?,
                };
                let decision = match gate.review(&request)? {
                    GateOutcome::Parked => return Ok(IterationOutcome::Parked(request)),
                    GateOutcome::Decided(d) => d,
                };
                decision.validate()?;
                let verdict = decision.verdict.clone();
                attempts.push(Attempt {
                    attempt,
                    candidate: request.candidate.clone(),
                    decision,
                });
                match verdict {
                    Verdict::Approve => break request.candidate,
                    Verdict::Edit { text } => break text,
                    Verdict::Regenerate => {
                        attempt += 1;
                        if attempt > self.config.max_regenerations {
                            return Err(StoryError::GenerationFailed {
                                what: format!("expansion of chunk {idx} in iteration {iteration}"),
                                attempts: attempt,
                                reason: "reviewer kept requesting regeneration".into(),
                            });
                        }
                    }
                }
            };
            let inserted = normalize_story(&inserted);
            if inserted.is_empty() {
                return Err(StoryError::GenerationFailed {
                    what: format!("expansion of chunk {idx} in iteration {iteration}"),
                    attempts: attempt + 1,
                    reason: "empty expansion".into(),
                });
            }
            texts[idx] = inserted.clone();
            expansions.push(Expansion {
                chunk_index: idx,
                original,
                attempts,
                inserted,
            });
        }
        let new_story = join_chunks(&texts);
        let record = IterationRecord {
            iteration,
            seed,
            granularity: self.config.granularity,
            weights: self.config.weights,
            words_before: word_count(&story),
            words_after: word_count(&new_story),
            story_summary,
            story_summary_embedding,
            chunks: traces,
            scores,
            chosen,
            expansions,
        };
        Ok(IterationOutcome::Done { record, story: new_story })
    }

    fn expand(&self, story: &str, paragraph: &str, profile: &CharacterProfile, seed: u64) -> Result<String, StoryError> {
        let values: Bindings = bindings([
            ("character_name", profile.name.clone()),
            ("basic_information", profile.basic_information()),
            ("draft", story.to_string()),
            ("paragraph", paragraph.to_string()),
        ]);
        Ok(self
            .gateway
            .generate(ids::LIFE_STORY, &values, &self.ctx(seed, profile), &GenerationParams::data_generation())?)
    }

    /// Continues a forge from journaled records. `on_record` runs after each
    /// completed iteration, before the next starts, so callers can persist
    /// progress.
    pub fn resume(
        &mut self,
        profile: &CharacterProfile,
        biography: Biography,
        done: Vec<IterationRecord>,
        gate: &mut dyn ReviewGate,
        seed: u64,
        on_record: &mut dyn FnMut(&IterationRecord) -> Result<(), StoryError>,
    ) -> Result<ForgeProgress, StoryError> {
        let mut text = replay_journal(&biography.text, &done)?;
        let mut story = LifeStory {
            character: profile.slug(),
            seed,
            biography,
            text: text.clone(),
            iterations: done,
        };
        for (i, r) in story.iterations.iter().enumerate() {
            if r.iteration != i + 1 {
                return Err(StoryError::Replay(format!("journal entry {} has iteration {}", i + 1, r.iteration)));
            }
        }
        for iteration in story.iterations.len() + 1..=self.config.iterations {
            match self.run_iteration(&text, profile, gate, iteration, derive(seed, &[iteration as u64]))? {
                IterationOutcome::Parked(request) => {
                    story.text = text;
                    return Ok(ForgeProgress::Parked { story, request });
                }
                IterationOutcome::Done { record, story: next } => {
                    on_record(&record)?;
                    story.iterations.push(record);
                    text = next;
                }
            }
        }
        story.text = text;
        Ok(ForgeProgress::Complete(story))
    }

    /// Biography plus all iterations. A parking gate yields
    /// [`StoryError::Parked`].
    pub fn forge(
        &mut self,
        profile: &CharacterProfile,
        gate: &mut dyn ReviewGate,
        seed: u64,
    ) -> Result<LifeStory, StoryError> {
        let biography = self.generate_biography(profile, seed)?;
        match self.resume(profile, biography, Vec::new(), gate, seed, &mut |_| Ok(()))? {
            ForgeProgress::Complete(s) => Ok(s),
            ForgeProgress::Parked { request, .. } => Err(StoryError::Parked(request.task_id())),
        }
    }
}

pub fn generate_biography(
    profile: &CharacterProfile,
    gateway: &Gateway,
    config: &ForgeConfig,
    seed: u64,
) -> Result<Biography, StoryError> {
    Forge::new(gateway, config.clone())?.generate_biography(profile, seed)
}

pub fn run_iteration(
    story: &str,
    profile: &CharacterProfile,
    config: &ForgeConfig,
    gateway: &Gateway,
    gate: &mut dyn ReviewGate,
    iteration: usize,
    seed: u64,
) -> Result<IterationOutcome, StoryError> {
    Forge::new(gateway, config.clone())?.run_iteration(story, profile, gate, iteration, seed)
}

pub fn forge_story(
    profile: &CharacterProfile,
    config: &ForgeConfig,
    gateway: &Gateway,
    gate: &mut dyn ReviewGate,
    seed: u64,
) -> Result<LifeStory, StoryError> {
    Forge::new(gateway, config.clone())?.forge(profile, gate, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::character::{sample_profile, AttributePools, TraitPool};
    use crate::llm::{MockProvider, TemplateLibrary};
    use crate::story::review::{AutoApprove, ScriptedGate};
    use std::sync::Arc;

    fn profile() -> CharacterProfile {
        sample_profile(&AttributePools::bundled(), &TraitPool::bundled(), 42).unwrap()
    }

    #[test]
    fn biography_under_cap() {
        let g = Gateway::mock();
        let b = generate_biography(&profile(), &g, &ForgeConfig::default(), 1).unwrap();
        assert!(b.word_count > 0 && b.word_count <= 1000);
        assert!(b.text.contains(&profile().name));
        assert_eq!(b, generate_biography(&profile(), &g, &ForgeConfig::default(), 1).unwrap());
    }

    #[test]
    fn biography_over_cap_fails_at_cap() {
        let long = "word ".repeat(1001);
        let mock = Arc::new(MockProvider::bundled().recording().with_fixture(ids::BIOGRAPHY, None, [long]));
        let g = Gateway::new(mock.clone(), TemplateLibrary::bundled());
        let err = generate_biography(&profile(), &g, &ForgeConfig::default(), 1).unwrap_err();
        assert!(matches!(err, StoryError::GenerationFailed { attempts: 3, .. }), "{err:?}");
        assert_eq!(mock.calls().len(), 3);
    }

    #[test]
    fn zero_iterations_rejected() {
        let cfg = ForgeConfig::default().with_iterations(0);
        assert!(matches!(
            forge_story(&profile(), &cfg, &Gateway::mock(), &mut AutoApprove, 1),
            Err(StoryError::InvalidConfig(_))
        ));
    }

    #[test]
    fn auto_approve_expands_chosen_chunk() {
        let g = Gateway::mock();
        let p = profile();
        let bio = generate_biography(&p, &g, &ForgeConfig::default(), 3).unwrap();
        let cfg = ForgeConfig::default();
        let out = run_iteration(&bio.text, &p, &cfg, &g, &mut AutoApprove, 1, 9).unwrap();
        let IterationOutcome::Done { record, story } = out else { panic!("parked") };
        assert_eq!(record.expansions.len(), 1);
        let e = &record.expansions[0];
        assert_eq!(e.chunk_index, record.chosen_index());
        assert!(e.inserted.starts_with(&e.original));
        assert!(story.contains(&e.inserted));
        assert_eq!(record.apply(&bio.text).unwrap(), story);
        assert!(record.words_after > record.words_before);
    }

    #[test]
    fn edit_inserts_reviewer_text() {
        let g = Gateway::mock();
        let p = profile();
        let bio = generate_biography(&p, &g, &ForgeConfig::default(), 3).unwrap();
        let mut gate = ScriptedGate::new([ReviewDecision::edit("r1", "Reviewer wrote this paragraph.")]);
        let out = run_iteration(&bio.text, &p, &ForgeConfig::default(), &g, &mut gate, 1, 9).unwrap();
        let IterationOutcome::Done { record, story } = out else { panic!("parked") };
        assert_eq!(record.expansions[0].inserted, "Reviewer wrote this paragraph.");
        assert!(story.contains("Reviewer wrote this paragraph."));
    }

    #[test]
    fn regenerate_then_approve() {
        let g = Gateway::mock();
        let p = profile();
        let bio = generate_biography(&p, &g, &ForgeConfig::default(), 3).unwrap();
        let mut gate = ScriptedGate::new([ReviewDecision::regenerate("r1"), ReviewDecision::approve("r1")]);
        let out = run_iteration(&bio.text, &p, &ForgeConfig::default(), &g, &mut gate, 1, 9).unwrap();
        let IterationOutcome::Done { record, .. } = out else { panic!("parked") };
        let e = &record.expansions[0];
        assert_eq!(e.attempts.len(), 2);
        assert_eq!(e.inserted, normalize_story(&e.attempts[1].candidate));
        assert_eq!(gate.seen[1].attempt, 1);
    }

    #[test]
    fn top_k_two() {
        let g = Gateway::mock();
        let p = profile();
        let bio = generate_biography(&p, &g, &ForgeConfig::default(), 3).unwrap();
        let cfg = ForgeConfig {
            top_k: 2,
            ..ForgeConfig::default()
        };
        let IterationOutcome::Done { record, story } = run_iteration(&bio.text, &p, &cfg, &g, &mut AutoApprove, 1, 9).unwrap() else {
            panic!()
        };
        assert_eq!(record.expansions.len(), 2);
        assert_eq!(record.apply(&bio.text).unwrap(), story);
    }

    #[test]
    fn summaries_are_cached() {
        let g = Gateway::mock();
        let p = profile();
        let mut forge = Forge::new(&g, ForgeConfig::default().with_iterations(3)).unwrap();
        let s = forge.forge(&p, &mut AutoApprove, 5).unwrap();
        assert_eq!(s.iterations.len(), 3);
        // Unchanged chunks reuse their summaries, so the cache holds fewer
        // entries than summaries requested.
        let requested: usize = s.iterations.iter().map(|r| r.chunks.len() + 1).sum();
        assert!(forge.cache().len() < requested);
    }
}
