//! Inter-character distance: a normalized attribute distance combined with
//! the Kendall rank correlation of the personality rankings.
//!
//! Attribute encoding (mean over eight attributes, each in `[0, 1]`):
//! gender, occupation, family, education and long-term goal contribute a 0/1
//! mismatch; age contributes `|Δage| / span(age range)`; hobbies and
//! short-term goals contribute their Jaccard distance. Names are excluded.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::pools::AgeRange;
use super::profile::CharacterProfile;
use super::CharacterError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DistanceBreakdown {
    pub l1: f64,
    pub tau: f64,
    pub tau_normalized: f64,
    pub total: f64,
}

impl DistanceBreakdown {
    pub fn from_parts(l1: f64, tau: f64) -> Self {
        let tau_normalized = (tau + 1.0) / 2.0;
        Self {
            l1,
            tau,
            tau_normalized,
            total: (l1 + 1.0 - tau_normalized) / 2.0,
        }
    }
}

/// Kendall's tau between two orderings of the same elements:
/// `(concordant - discordant) / C(n, 2)`.
pub fn kendall_tau<T: PartialEq>(a: &[T], b: &[T]) -> Result<f64, CharacterError> {
    if a.len() != b.len() {
        return Err(CharacterError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(CharacterError::NotAPermutation(format!(
            "need at least two elements, got {n}"
        )));
    }
    // Position in `b` of each element of `a`; also proves `a` and `b` hold the
    // same distinct elements.
    let mut pos_in_b = Vec::with_capacity(n);
    let mut used = vec![false; n];
    for (i, x) in a.iter().enumerate() {
        if a[..i].contains(x) {
            return Err(CharacterError::NotAPermutation("repeated element".into()));
        }
        let j = b
            .iter()
            .position(|y| y == x)
            .ok_or_else(|| CharacterError::NotAPermutation("element missing from second ranking".into()))?;
        used[j] = true;
        pos_in_b.push(j as i64);
    }
    if used.iter().any(|u| !u) {
        return Err(CharacterError::NotAPermutation("rankings hold different elements".into()));
    }
    // Elements of `a` are in increasing `a`-position, so a pair (i < j) is
    // concordant exactly when their `b`-positions also increase.
    let mut score = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            score += (pos_in_b[j] - pos_in_b[i]).signum();
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Ok(score as f64 / pairs)
}

fn mismatch<T: PartialEq>(a: &T, b: &T) -> f64 {
    if a == b {
        0.0
    } else {
        1.0
    }
}

fn jaccard_distance(a: &[String], b: &[String]) -> f64 {
    let a: HashSet<&String> = a.iter().collect();
    let b: HashSet<&String> = b.iter().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    1.0 - a.intersection(&b).count() as f64 / union as f64
}

/// Normalized attribute distance in `[0, 1]`.
pub fn attribute_distance(a: &CharacterProfile, b: &CharacterProfile, ages: AgeRange) -> f64 {
    let span = ages.span().max(1) as f64;
    let age = ((a.age as f64 - b.age as f64).abs() / span).min(1.0);
    let parts = [
        mismatch(&a.gender, &b.gender),
        age,
        mismatch(&a.occupation, &b.occupation),
        jaccard_distance(&a.hobbies, &b.hobbies),
        mismatch(&a.family, &b.family),
        mismatch(&a.education, &b.education),
        jaccard_distance(&a.short_term_goals, &b.short_term_goals),
        mismatch(&a.long_term_goal, &b.long_term_goal),
    ];
    parts.iter().sum::<f64>() / parts.len() as f64
}

/// Distance with the default age range `[20, 56]`.
pub fn character_distance(a: &CharacterProfile, b: &CharacterProfile) -> DistanceBreakdown {
    character_distance_with(a, b, AgeRange { min: 20, max: 56 })
}

pub fn character_distance_with(a: &CharacterProfile, b: &CharacterProfile, ages: AgeRange) -> DistanceBreakdown {
    let l1 = attribute_distance(a, b, ages);
    let tau = kendall_tau(a.personality.ranking.order(), b.personality.ranking.order())
        .expect("rankings are permutations of the same tendencies");
    DistanceBreakdown::from_parts(l1, tau)
}

/// Averages of τ, l1 and total over all unordered pairs of a cast.
pub fn cast_averages(profiles: &[CharacterProfile], ages: AgeRange) -> Option<DistanceBreakdown> {
    let mut sums = (0.0, 0.0, 0.0, 0.0);
    let mut pairs = 0usize;
    for (i, a) in profiles.iter().enumerate() {
        for b in &profiles[i + 1..] {
            let d = character_distance_with(a, b, ages);
            sums.0 += d.l1;
            sums.1 += d.tau;
            sums.2 += d.tau_normalized;
            sums.3 += d.total;
            pairs += 1;
        }
    }
    (pairs > 0).then(|| {
        let n = pairs as f64;
        DistanceBreakdown {
            l1: sums.0 / n,
            tau: sums.1 / n,
            tau_normalized: sums.2 / n,
            total: sums.3 / n,
        }
    })
}
