//! Biography generation, chunk scoring and the iterative, reviewed expansion
//! of a life story.

mod chunk;
mod forge;
mod review;
mod score;
mod selection;

pub use chunk::{chunk_story, join_chunks, normalize_story, paragraphs, word_count, StoryChunk, PARAGRAPH_SEPARATOR};
pub use forge::{
    forge_story, generate_biography, replay_journal, run_iteration, Attempt, Biography, ChunkTrace, Expansion, Forge,
    ForgeConfig, ForgeProgress, IterationOutcome, IterationRecord, LifeStory, SummaryCache,
};
pub use review::{
    AutoApprove, GateOutcome, ReviewDecision, ReviewGate, ReviewKind, ReviewMode, ReviewRequest, ScriptedGate, Verdict,
};
pub use score::{score_all, score_chunk, select_expansion_target, select_top_k, ChunkScore, ScoreWeights};
pub use selection::{draft_profiles, parse_rating, rank_profiles, recheck_profiles, select_top, RankedProfile, RecheckOutcome};

use crate::character::CharacterError;
use crate::llm::GatewayError;

#[derive(Debug, thiserror::Error)]
pub enum StoryError {
    #[error("story is empty")]
    EmptyStory,
    #[error("chunk granularity must be at least one paragraph")]
    InvalidGranularity,
    #[error("embedding dimensions differ ({left} vs {right})")]
    DimensionMismatch { left: usize, right: usize },
    #[error("no scores to select from")]
    EmptyScores,
    #[error("invalid forge configuration: {0}")]
    InvalidConfig(String),
    #[error("{what} failed after {attempts} attempt(s): {reason}")]
    GenerationFailed { what: String, attempts: u32, reason: String },
    #[error("review task {0} timed out")]
    ReviewTimeout(String),
    #[error("waiting for review task {0}")]
    Parked(String),
    #[error("invalid review decision: {0}")]
    InvalidDecision(String),
    #[error("journal replay failed: {0}")]
    Replay(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Character(#[from] CharacterError),
}
