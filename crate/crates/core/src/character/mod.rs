//! Attribute pools, Jungian personality modeling, profile sampling and
//! validation, and the inter-character distance.

mod distance;
mod personality;
mod pools;
mod profile;

use std::path::Path;

pub use distance::{attribute_distance, cast_averages, character_distance, character_distance_with, kendall_tau, DistanceBreakdown};
pub use personality::{select_traits, PersonalityAssignment, Ranking, Tendency, TraitPool, RANK_COUNTS, TRAIT_TOTAL};
pub use pools::{AgeRange, AttributePools, NameList};
pub use profile::{
    age_on, default_reference_date, sample_profile, sample_profile_at, slugify, validate_profile, CharacterProfile, Gender,
    Violation, HOBBY_COUNT, SHORT_TERM_GOAL_COUNT,
};

#[derive(Debug, thiserror::Error)]
pub enum CharacterError {
    #[error("pool {pool} holds {available} values but {needed} are required")]
    PoolTooSmall { pool: String, needed: usize, available: usize },
    #[error("trait cell ({tendency}, rank {rank}) holds {available} descriptions but {needed} are required")]
    CellUnderfull {
        tendency: Tendency,
        rank: u8,
        needed: usize,
        available: usize,
    },
    #[error("invalid pool {pool}: {reason}")]
    InvalidPool { pool: String, reason: String },
    #[error("rankings differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("not a permutation: {0}")]
    NotAPermutation(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: serde_json::Error },
}

impl CharacterError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(path: &Path, source: serde_json::Error) -> Self {
        Self::Parse {
            path: path.display().to_string(),
            source,
        }
    }
}
