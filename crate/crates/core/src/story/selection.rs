use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::review::{GateOutcome, ReviewGate, ReviewKind, ReviewRequest, Verdict};
use super::StoryError;
use crate::character::{sample_profile, validate_profile, AttributePools, CharacterProfile, TraitPool};
use crate::llm::{bindings, ids, CallContext, Gateway, GenerationParams};
use crate::seed::derive;

static SCORE_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(10|[1-9])\b").expect("valid regex"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RankedProfile {
    pub draft_index: usize,
    /// 1..=10, or 0 when the rating could not be parsed.
    pub score: u8,
    pub raw: String,
    pub profile: CharacterProfile,
}

/// First integer 1..=10 in a rating reply.
pub fn parse_rating(text: &str) -> Option<u8> {
    SCORE_RE.captures(text).and_then(|c| c[1].parse().ok())
}

/// `k` draft profiles from seeds derived from `seed`.
pub fn draft_profiles(
    pools: &AttributePools,
    traits: &TraitPool,
    k: usize,
    seed: u64,
) -> Result<Vec<CharacterProfile>, StoryError> {
    (0..k)
        .map(|i| sample_profile(pools, traits, derive(seed, &[i as u64])).map_err(StoryError::from))
        .collect()
}

/// Rates every draft through the ranking prompt.
pub fn rank_profiles(drafts: &[CharacterProfile], gateway: &Gateway, seed: u64) -> Result<Vec<RankedProfile>, StoryError> {
    drafts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let raw = gateway.generate(
                ids::PROFILE_RANKING,
                &bindings([("basic_information", p.basic_information())]),
                &CallContext::seeded(derive(seed, &[i as u64])).with_extra(&p.attribute_bindings()),
                &GenerationParams::evaluation(),
            )?;
            let score = parse_rating(&raw).unwrap_or_else(|| {
                tracing::warn!(draft = i, reply = %raw, "unparseable profile rating");
                0
            });
            Ok(RankedProfile {
                draft_index: i,
                score,
                raw,
                profile: p.clone(),
            })
        })
        .collect()
}

/// The `n` best-rated drafts; equal ratings keep draft order.
pub fn select_top(ranked: &[RankedProfile], n: usize) -> Vec<RankedProfile> {
    let mut v = ranked.to_vec();
    v.sort_by(|a, b| b.score.cmp(&a.score).then(a.draft_index.cmp(&b.draft_index)));
    v.truncate(n);
    v
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecheckOutcome {
    pub accepted: Vec<CharacterProfile>,
    pub rejected: Vec<usize>,
    /// Draft indices still waiting for a reviewer.
    pub pending: Vec<usize>,
}

/// Human recheck of selected profiles. Approve keeps the profile, edit
/// replaces it with the reviewer's document (which must validate), and
/// regenerate drops it.
pub fn recheck_profiles(
    selected: &[RankedProfile],
    pools: &AttributePools,
    traits: &TraitPool,
    gate: &mut dyn ReviewGate,
) -> Result<RecheckOutcome, StoryError> {
    let mut out = RecheckOutcome::default();
    for r in selected {
        let request = ReviewRequest {
            kind: ReviewKind::ProfileRecheck,
            character: r.profile.slug(),
            iteration: 0,
            attempt: 0,
            chunk_index: None,
            original: String::new(),
            candidate: serde_json::to_string_pretty(&r.profile).expect("profile serializes"),
            context: format!("rating {} for draft {}", r.score, r.draft_index),
        };
        let decision = match gate.review(&request)? {
            GateOutcome::Parked => {
                out.pending.push(r.draft_index);
                continue;
            }
            GateOutcome::Decided(d) => d,
        };
        decision.validate()?;
        match decision.verdict {
            Verdict::Approve => out.accepted.push(r.profile.clone()),
            Verdict::Regenerate => out.rejected.push(r.draft_index),
            Verdict::Edit { text } => {
                let edited: CharacterProfile = serde_json::from_str(&text)
                    .map_err(|e| StoryError::InvalidDecision(format!("edited profile does not parse: {e}")))?;
                let violations = validate_profile(&edited, pools, traits);
                if !violations.is_empty() {
                    return Err(StoryError::InvalidDecision(format!(
                        "edited profile is invalid: {}",
                        violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
                    )));
                }
                out.accepted.push(edited);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::story::review::{AutoApprove, ReviewDecision, ScriptedGate};

    #[test]
    fn rating_parse() {
        assert_eq!(parse_rating("Score: 7"), Some(7));
        assert_eq!(parse_rating("I give it 10/10"), Some(10));
        assert_eq!(parse_rating("no idea"), None);
        assert_eq!(parse_rating("Score: 11"), None);
    }

    #[test]
    fn ties_keep_draft_order() {
        let pools = AttributePools::bundled();
        let traits = TraitPool::bundled();
        let drafts = draft_profiles(&pools, &traits, 3, 1).unwrap();
        let mk = |i: usize, s: u8| RankedProfile {
            draft_index: i,
            score: s,
            raw: String::new(),
            profile: drafts[i].clone(),
        };
        let top = select_top(&[mk(0, 5), mk(1, 8), mk(2, 8)], 2);
        assert_eq!(top.iter().map(|r| r.draft_index).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn rank_and_recheck() {
        let pools = AttributePools::bundled();
        let traits = TraitPool::bundled();
        let drafts = draft_profiles(&pools, &traits, 5, 7).unwrap();
        let ranked = rank_profiles(&drafts, &Gateway::mock(), 7).unwrap();
        assert!(ranked.iter().all(|r| (1..=10).contains(&r.score)));
        let top = select_top(&ranked, 3);
        let out = recheck_profiles(&top, &pools, &traits, &mut AutoApprove).unwrap();
        assert_eq!(out.accepted.len(), 3);

        let mut edited = top[1].profile.clone();
        edited.occupation = pools.occupations[0].clone();
        let mut gate = ScriptedGate::new([
            ReviewDecision::regenerate("r"),
            ReviewDecision::edit("r", &serde_json::to_string(&edited).unwrap()),
        ]);
        let out = recheck_profiles(&top, &pools, &traits, &mut gate).unwrap();
        assert_eq!(out.rejected, vec![top[0].draft_index]);
        assert_eq!(out.accepted[0], edited);
        assert_eq!(out.accepted.len(), 2);
    }

    #[test]
    fn invalid_edit_rejected() {
        let pools = AttributePools::bundled();
        let traits = TraitPool::bundled();
        let drafts = draft_profiles(&pools, &traits, 1, 7).unwrap();
        let ranked = rank_profiles(&drafts, &Gateway::mock(), 7).unwrap();
        let mut bad = drafts[0].clone();
        bad.hobbies.pop();
        let mut gate = ScriptedGate::new([ReviewDecision::edit("r", &serde_json::to_string(&bad).unwrap())]);
        assert!(matches!(
            recheck_profiles(&ranked, &pools, &traits, &mut gate),
            Err(StoryError::InvalidDecision(_))
        ));
    }
}
