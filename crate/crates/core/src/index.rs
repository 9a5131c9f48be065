//! Exact in-memory cosine index over issue embeddings.
//!
//! Everything is brute force: `top_k` is a linear scan and `pairwise_scan`
//! visits all n(n-1)/2 pairs. Vectors are stored exactly as supplied.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingVector;
use crate::model::IssuePair;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("vector has dimension {got}, index expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cosine is undefined for a zero vector")]
    ZeroVector,
    #[error("index holds too few items")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("threshold {0} is outside (0, 1]")]
    InvalidThreshold(f64),
    #[error("index dump: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexedItem {
    pub key: String,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredNeighbor {
    pub key: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub pair: IssuePair,
    pub score: f64,
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Cosine similarity. The norms are combined as `sqrt(|u|² |v|²)`, which
/// makes identical vectors score exactly 1.0 and keeps the result symmetric
/// in its arguments.
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, IndexError> {
    if u.dim() != v.dim() {
        return Err(IndexError::DimensionMismatch {
            expected: u.dim(),
            got: v.dim(),
        });
    }
    let uu = dot(u.values(), u.values());
    let vv = dot(v.values(), v.values());
    if uu == 0.0 || vv == 0.0 {
        return Err(IndexError::ZeroVector);
    }
    let score = dot(u.values(), v.values()) / (uu * vv).sqrt();
    Ok(score.clamp(-1.0, 1.0))
}

pub fn validate_threshold(threshold: f64) -> Result<f64, IndexError> {
    if threshold > 0.0 && threshold <= 1.0 {
        Ok(threshold)
    } else {
        Err(IndexError::InvalidThreshold(threshold))
    }
}

fn by_score_then<K: Ord>(a: (f64, &K), b: (f64, &K)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// Items keyed by issue key. The first insert fixes the dimension.
///
/// Mutation needs `&mut self`, so shared access is readers-or-one-writer;
/// wrap in a `RwLock` to share across threads.
#[derive(Debug, Clone, Default)]
pub struct VectorIndex {
    dim: Option<usize>,
    items: BTreeMap<String, EmbeddingVector>,
}

impl VectorIndex {
    pub fn new() -> Self {
        VectorIndex::default()
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&EmbeddingVector> {
        self.items.get(key)
    }

    pub fn upsert(&mut self, item: IndexedItem) -> Result<(), IndexError> {
        match self.dim {
            Some(dim) if dim != item.vector.dim() => {
                return Err(IndexError::DimensionMismatch {
                    expected: dim,
                    got: item.vector.dim(),
                })
            }
            _ => self.dim = Some(item.vector.dim()),
        }
        self.items.insert(item.key, item.vector);
        Ok(())
    }

    pub fn top_k(
        &self,
        query: &EmbeddingVector,
        k: usize,
        exclude: Option<&str>,
    ) -> Result<Vec<ScoredNeighbor>, IndexError> {
        if self.items.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        let mut scored = Vec::with_capacity(self.items.len());
        for (key, vector) in &self.items {
            if exclude == Some(key.as_str()) {
                continue;
            }
            scored.push(ScoredNeighbor {
                key: key.clone(),
                score: cosine(query, vector)?,
            });
        }
        scored.sort_by(|a, b| by_score_then((a.score, &a.key), (b.score, &b.key)));
        scored.truncate(k);
        Ok(scored)
    }

    /// All canonical pairs with cosine >= `threshold`, highest score first,
    /// ties by pair.
    pub fn pairwise_scan(&self, threshold: f64) -> Result<Vec<ScoredPair>, IndexError> {
        validate_threshold(threshold)?;
        if self.items.len() < 2 {
            return Err(IndexError::EmptyIndex);
        }
        let entries: Vec<(&String, &EmbeddingVector)> = self.items.iter().collect();
        let mut hits = Vec::new();
        for (i, (ka, va)) in entries.iter().enumerate() {
            for (kb, vb) in &entries[i + 1..] {
                let score = cosine(va, vb)?;
                if score >= threshold {
                    // BTreeMap iteration order means ka < kb already.
                    let pair = IssuePair::new(ka.as_str(), kb.as_str()).expect("distinct keys");
                    hits.push(ScoredPair { pair, score });
                }
            }
        }
        hits.sort_by(|a, b| by_score_then((a.score, &a.pair), (b.score, &b.pair)));
        Ok(hits)
    }

    /// Writes `{ "key": [values...] }` as pretty JSON, for debugging.
    pub fn dump_json(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        let map: BTreeMap<&str, &[f64]> = self.items.iter().map(|(k, v)| (k.as_str(), v.values())).collect();
        let text = serde_json::to_string_pretty(&map).map_err(|e| IndexError::Io(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| IndexError::Io(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    fn item(key: &str, values: &[f64]) -> IndexedItem {
        IndexedItem {
            key: key.into(),
            vector: v(values),
        }
    }

    #[test]
    fn cosine_reference_values() {
        assert_eq!(cosine(&v(&[0.3, -0.2, 0.9]), &v(&[0.3, -0.2, 0.9])).unwrap(), 1.0);
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let s = cosine(&v(&[1.0, 0.0]), &v(&[1.0, 1.0])).unwrap();
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert_eq!(
            cosine(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])),
            Err(IndexError::ZeroVector)
        );
        assert!(matches!(
            cosine(&v(&[1.0]), &v(&[1.0, 0.0])),
            Err(IndexError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn upsert_semantics() {
        let mut index = VectorIndex::new();
        index.upsert(item("A", &[1.0, 0.0])).unwrap();
        index.upsert(item("A", &[0.0, 1.0])).unwrap();
        assert_eq!(index.len(), 1);
        assert_eq!(index.get("A").unwrap().values(), &[0.0, 1.0]);
        let hits = index.top_k(&v(&[0.0, 1.0]), 1, None).unwrap();
        assert_eq!(hits[0].score, 1.0);
        assert_eq!(
            index.upsert(item("B", &[1.0])),
            Err(IndexError::DimensionMismatch { expected: 2, got: 1 })
        );
    }

    #[test]
    fn top_k_clamps_excludes_and_orders() {
        let mut index = VectorIndex::new();
        index.upsert(item("C", &[1.0, 0.0])).unwrap();
        index.upsert(item("B", &[1.0, 0.0])).unwrap();
        index.upsert(item("A", &[0.0, 1.0])).unwrap();
        let all = index.top_k(&v(&[1.0, 0.0]), 10, None).unwrap();
        let keys: Vec<_> = all.iter().map(|n| n.key.as_str()).collect();
        assert_eq!(keys, ["B", "C", "A"]);
        let without = index.top_k(&v(&[1.0, 0.0]), 10, Some("B")).unwrap();
        assert!(without.iter().all(|n| n.key != "B"));
        assert_eq!(
            VectorIndex::new().top_k(&v(&[1.0]), 1, None),
            Err(IndexError::EmptyIndex)
        );
        assert_eq!(index.top_k(&v(&[0.0, 0.0]), 1, None), Err(IndexError::ZeroVector));
    }

    #[test]
    fn scan_at_one_keeps_only_exact_duplicates() {
        let mut index = VectorIndex::new();
        index.upsert(item("P-1", &[1.0, 2.0, 3.0])).unwrap();
        index.upsert(item("P-2", &[1.0, 2.0, 3.0])).unwrap();
        index.upsert(item("P-3", &[1.0, 2.0, 3.0 + 1e-3])).unwrap();
        index.upsert(item("P-4", &[1.0 + 1e-3, 2.0, 3.0])).unwrap();
        let hits = index.pairwise_scan(1.0).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].pair, IssuePair::new("P-1", "P-2").unwrap());
    }

    #[test]
    fn scan_above_max_is_empty() {
        let mut index = VectorIndex::new();
        index.upsert(item("A", &[1.0, 0.1])).unwrap();
        index.upsert(item("B", &[0.2, 1.0])).unwrap();
        index.upsert(item("C", &[1.0, 1.0])).unwrap();
        let max = index.pairwise_scan(1e-9).unwrap()[0].score;
        assert!(index.pairwise_scan(max + 1e-12).unwrap().is_empty());
        assert_eq!(index.pairwise_scan(max).unwrap().len(), 1);
    }

    #[test]
    fn scan_guards() {
        let mut index = VectorIndex::new();
        index.upsert(item("A", &[1.0])).unwrap();
        assert_eq!(index.pairwise_scan(0.5), Err(IndexError::EmptyIndex));
        assert_eq!(index.pairwise_scan(0.0), Err(IndexError::InvalidThreshold(0.0)));
        assert_eq!(index.pairwise_scan(1.01), Err(IndexError::InvalidThreshold(1.01)));
    }

    #[test]
    fn dump_writes_key_to_values_map() {
        let mut index = VectorIndex::new();
        index.upsert(item("A", &[0.5, 0.25])).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.json");
        index.dump_json(&path).unwrap();
        let back: BTreeMap<String, Vec<f64>> =
            serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(back["A"], vec![0.5, 0.25]);
    }
}
