use serde::{Deserialize, Serialize};

use super::StoryError;
use crate::llm::{cosine, GatewayError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            beta: 1.0,
            gamma: 1.2,
        }
    }
}

impl ScoreWeights {
    pub fn validate(&self) -> Result<(), StoryError> {
        if [self.alpha, self.beta, self.gamma].iter().all(|w| w.is_finite() && *w > 0.0) {
            Ok(())
        } else {
            Err(StoryError::InvalidConfig("weights must be positive".into()))
        }
    }

    pub fn combine(&self, importance: f64, elaborateness: f64, redundancy: f64) -> f64 {
        self.alpha * importance + self.beta * elaborateness - self.gamma * redundancy
    }
}

/// `elaborateness` is the similarity between a chunk and its own summary, as
/// the scoring rule is defined, even though a high value means the chunk adds
/// little beyond its summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkScore {
    pub importance: f64,
    pub elaborateness: f64,
    pub redundancy: f64,
    pub score: f64,
}

fn cos(a: &[f64], b: &[f64]) -> Result<f64, StoryError> {
    cosine(a, b).map_err(|e| match e {
        GatewayError::DimensionMismatch { left, right } => StoryError::DimensionMismatch { left, right },
        other => StoryError::Gateway(other),
    })
}

/// Scores one chunk. Redundancy is the mean similarity to the other chunks,
/// and 0 when there are none.
pub fn score_chunk<V: AsRef<[f64]>>(
    chunk: &[f64],
    story_summary: &[f64],
    chunk_summary: &[f64],
    others: &[V],
    weights: &ScoreWeights,
) -> Result<ChunkScore, StoryError> {
    let importance = cos(chunk, story_summary)?;
    let elaborateness = cos(chunk, chunk_summary)?;
    let redundancy = if others.is_empty() {
        0.0
    } else {
        let mut sum = 0.0;
        for o in others {
            sum += cos(chunk, o.as_ref())?;
        }
        sum / others.len() as f64
    };
    Ok(ChunkScore {
        importance,
        elaborateness,
        redundancy,
        score: weights.combine(importance, elaborateness, redundancy),
    })
}

/// Scores every chunk against all the others.
pub fn score_all<V: AsRef<[f64]>>(
    chunks: &[V],
    chunk_summaries: &[V],
    story_summary: &[f64],
    weights: &ScoreWeights,
) -> Result<Vec<ChunkScore>, StoryError> {
    (0..chunks.len())
        .map(|i| {
            let others: Vec<&[f64]> = chunks
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, v)| v.as_ref())
                .collect();
            score_chunk(chunks[i].as_ref(), story_summary, chunk_summaries[i].as_ref(), &others, weights)
        })
        .collect()
}

/// Index of the highest score; the lowest index wins ties.
pub fn select_expansion_target(scores: &[ChunkScore]) -> Result<usize, StoryError> {
    select_top_k(scores, 1).map(|v| v[0])
}

/// The `k` highest-scoring indices, best first, ties by lower index.
pub fn select_top_k(scores: &[ChunkScore], k: usize) -> Result<Vec<usize>, StoryError> {
    if scores.is_empty() {
        return Err(StoryError::EmptyScores);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].score.total_cmp(&scores[a].score).then(a.cmp(&b)));
    idx.truncate(k.max(1));
    Ok(idx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(score: f64) -> ChunkScore {
        ChunkScore {
            importance: 0.0,
            elaborateness: 0.0,
            redundancy: 0.0,
            score,
        }
    }

    #[test]
    fn hand_computed_example() {
        let w = ScoreWeights::default();
        let c = score_chunk(&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[[1.0, 0.0]], &w).unwrap();
        assert_eq!((c.importance, c.elaborateness, c.redundancy), (1.0, 0.0, 1.0));
        assert!((c.score - (-0.4)).abs() < 1e-12);
    }

    #[test]
    fn all_ones() {
        let w = ScoreWeights::default();
        let c = score_chunk(&[1.0, 1.0], &[2.0, 2.0], &[3.0, 3.0], &[[0.5, 0.5]], &w).unwrap();
        assert!((c.score - 0.6).abs() < 1e-12);
    }

    #[test]
    fn single_chunk_has_no_redundancy() {
        let none: [[f64; 2]; 0] = [];
        let c = score_chunk(&[1.0, 0.0], &[1.0, 0.0], &[1.0, 0.0], &none, &ScoreWeights::default()).unwrap();
        assert_eq!(c.redundancy, 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let r = score_chunk(&[1.0], &[1.0, 0.0], &[1.0], &[[1.0]], &ScoreWeights::default());
        assert!(matches!(r, Err(StoryError::DimensionMismatch { .. })));
    }

    #[test]
    fn argmax_rules() {
        assert_eq!(select_expansion_target(&[s(0.1), s(0.9), s(0.3)]).unwrap(), 1);
        assert_eq!(select_expansion_target(&[s(0.5), s(0.5)]).unwrap(), 0);
        assert!(matches!(select_expansion_target(&[]), Err(StoryError::EmptyScores)));
        assert_eq!(select_top_k(&[s(0.1), s(0.9), s(0.3)], 2).unwrap(), vec![1, 2]);
    }

    #[test]
    fn rejects_bad_weights() {
        let w = ScoreWeights {
            alpha: 0.0,
            ..ScoreWeights::default()
        };
        assert!(w.validate().is_err());
    }
}
