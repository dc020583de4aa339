use serde::{Deserialize, Serialize};

use super::GatewayError;

pub const MOCK_EMBEDDING_DIM: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, GatewayError> {
        if values.is_empty() {
            return Err(GatewayError::InvalidEmbedding("empty vector".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GatewayError::InvalidEmbedding("non-finite entry".into()));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Cosine similarity. A zero vector has similarity 0 with everything.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, GatewayError> {
    if a.len() != b.len() {
        return Err(GatewayError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Lowercased alphanumeric tokens.
pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Token counts hashed into `dim` buckets.
pub fn hashed_bag_of_words(text: &str, dim: usize) -> Result<EmbeddingVector, GatewayError> {
    if text.trim().is_empty() {
        return Err(GatewayError::EmptyText);
    }
    let mut v = vec![0.0; dim];
    for tok in tokens(text) {
        v[(crate::seed::fnv1a(tok.as_bytes()) % dim as u64) as usize] += 1.0;
    }
    Ok(EmbeddingVector(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_texts() {
        let a = hashed_bag_of_words("Mary planted trees in East Town", MOCK_EMBEDDING_DIM).unwrap();
        let b = hashed_bag_of_words("Mary planted trees in East Town", MOCK_EMBEDDING_DIM).unwrap();
        assert_eq!(a, b);
        assert!((cosine(&a.0, &b.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_vocabulary_is_orthogonal() {
        let a = hashed_bag_of_words("apple banana", MOCK_EMBEDDING_DIM).unwrap();
        let b = hashed_bag_of_words("river mountain", MOCK_EMBEDDING_DIM).unwrap();
        // Hand-check: each text occupies two distinct buckets and no bucket is
        // shared, so the sparse dot product is zero.
        let nz = |v: &EmbeddingVector| v.0.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(i, _)| i).collect::<Vec<_>>();
        let (ia, ib) = (nz(&a), nz(&b));
        assert_eq!(ia.len(), 2);
        assert_eq!(ib.len(), 2);
        assert!(ia.iter().all(|i| !ib.contains(i)));
        assert_eq!(cosine(&a.0, &b.0).unwrap(), 0.0);
    }

    #[test]
    fn empty_text_rejected() {
        assert!(matches!(hashed_bag_of_words("", 8), Err(GatewayError::EmptyText)));
        assert!(matches!(hashed_bag_of_words("  \n", 8), Err(GatewayError::EmptyText)));
    }

    #[test]
    fn cosine_dimension_check() {
        assert!(matches!(cosine(&[1.0], &[1.0, 0.0]), Err(GatewayError::DimensionMismatch { .. })));
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn vector_validation() {
        assert!(EmbeddingVector::new(vec![]).is_err());
        assert!(EmbeddingVector::new(vec![f64::NAN]).is_err());
        assert_eq!(EmbeddingVector::new(vec![3.0, 4.0]).unwrap().norm(), 5.0);
    }
}
