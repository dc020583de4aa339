use std::collections::VecDeque;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::StoryError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Verdict {
    Approve,
    Edit { text: String },
    Regenerate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReviewDecision {
    #[serde(flatten)]
    pub verdict: Verdict,
    pub reviewer: String,
    #[serde(default)]
    pub timestamp: Option<DateTime<Utc>>,
    #[serde(default)]
    pub note: Option<String>,
}

impl ReviewDecision {
    pub fn new(verdict: Verdict, reviewer: &str) -> Self {
        Self {
            verdict,
            reviewer: reviewer.to_string(),
            timestamp: None,
            note: None,
        }
    }

    pub fn approve(reviewer: &str) -> Self {
        Self::new(Verdict::Approve, reviewer)
    }

    pub fn edit(reviewer: &str, text: &str) -> Self {
        Self::new(Verdict::Edit { text: text.to_string() }, reviewer)
    }

    pub fn regenerate(reviewer: &str) -> Self {
        Self::new(Verdict::Regenerate, reviewer)
    }

    pub fn stamped(mut self, at: DateTime<Utc>) -> Self {
        self.timestamp = Some(at);
        self
    }

    pub fn validate(&self) -> Result<(), StoryError> {
        if self.reviewer.trim().is_empty() {
            return Err(StoryError::InvalidDecision("reviewer id is empty".into()));
        }
        if let Verdict::Edit { text } = &self.verdict {
            if text.trim().is_empty() {
                return Err(StoryError::InvalidDecision("edit carries no replacement text".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReviewMode {
    Interactive,
    Queued,
    #[default]
    AutoApprove,
}

impl std::str::FromStr for ReviewMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "interactive" => Ok(Self::Interactive),
            "queued" => Ok(Self::Queued),
            "auto-approve" | "auto" => Ok(Self::AutoApprove),
            other => Err(format!("unknown review mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReviewKind {
    StoryIteration,
    ProfileRecheck,
}

/// What a reviewer sees: the candidate plus enough context to judge it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReviewRequest {
    pub kind: ReviewKind,
    pub character: String,
    /// 1-based iteration; 0 for profile rechecks.
    pub iteration: usize,
    pub attempt: u32,
    /// Chunk being expanded, for story iterations.
    #[serde(default)]
    pub chunk_index: Option<usize>,
    /// Text before the change (the chunk, or empty for profiles).
    pub original: String,
    /// Proposed text (the expansion, or the profile document).
    pub candidate: String,
    /// Current story draft or other context.
    pub context: String,
}

impl ReviewRequest {
    /// Stable id for queues and journals.
    pub fn task_id(&self) -> String {
        match self.kind {
            ReviewKind::StoryIteration => format!(
                "{}-it{:03}-c{:03}-a{}",
                self.character,
                self.iteration,
                self.chunk_index.unwrap_or(0),
                self.attempt
            ),
            ReviewKind::ProfileRecheck => format!("{}-recheck-a{}", self.character, self.attempt),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GateOutcome {
    Decided(ReviewDecision),
    /// The request was queued; the pipeline must stop and resume later.
    Parked,
}

pub trait ReviewGate {
    fn review(&mut self, request: &ReviewRequest) -> Result<GateOutcome, StoryError>;

    /// A candidate generated before a restart for the same task, so the
    /// pipeline shows the reviewer's decision the text they actually saw.
    fn prior_candidate(&self, _task_id: &str) -> Option<String> {
        None
    }
}

/// Approves everything without a timestamp, keeping runs reproducible.
#[derive(Debug, Default, Clone, Copy)]
pub struct AutoApprove;

impl ReviewGate for AutoApprove {
    fn review(&mut self, _: &ReviewRequest) -> Result<GateOutcome, StoryError> {
        Ok(GateOutcome::Decided(ReviewDecision::approve("auto")))
    }
}

/// Replays a fixed list of decisions, then approves.
#[derive(Debug, Default, Clone)]
pub struct ScriptedGate {
    decisions: VecDeque<ReviewDecision>,
    pub seen: Vec<ReviewRequest>,
}

impl ScriptedGate {
    pub fn new(decisions: impl IntoIterator<Item = ReviewDecision>) -> Self {
        Self {
            decisions: decisions.into_iter().collect(),
            seen: Vec::new(),
        }
    }
}

impl ReviewGate for ScriptedGate {
    fn review(&mut self, request: &ReviewRequest) -> Result<GateOutcome, StoryError> {
        self.seen.push(request.clone());
        let d = self.decisions.pop_front().unwrap_or_else(|| ReviewDecision::approve("script"));
        d.validate()?;
        Ok(GateOutcome::Decided(d))
    }
}
