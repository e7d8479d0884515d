//! Frame-embedding abstraction and the cosine-similarity queries used by
//! the long-term memory.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("feature dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("feature vector must be non-empty with finite entries")]
    Invalid,
    #[error("empty feature pool")]
    EmptyPool,
}

/// Fixed-length embedding of one frame. Dimension is uniform within a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVec(Vec<f32>);

impl FeatureVec {
    pub fn new(values: Vec<f32>) -> Result<Self, FeatureError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::Invalid);
        }
        Ok(FeatureVec(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    /// Concatenate extra components (used by the memory fusion step).
    pub fn extended(&self, extra: &[f32]) -> FeatureVec {
        let mut v = self.0.clone();
        v.extend_from_slice(extra);
        FeatureVec(v)
    }
}

/// Maps a frame identifier to its embedding. Stands in for a frozen image
/// encoder; implementations must be deterministic for a fixed frame within
/// a run and safe for concurrent read-only use.
pub trait Embedder: Send + Sync {
    fn embed(&self, frame_index: usize) -> FeatureVec;
}

/// Cosine similarity in [-1, 1]. Accumulates in f64 for stability.
pub fn cosine_sim(a: &FeatureVec, b: &FeatureVec) -> Result<f64, FeatureError> {
    if a.dim() != b.dim() {
        return Err(FeatureError::DimensionMismatch(a.dim(), b.dim()));
    }
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (x, y) in a.0.iter().zip(&b.0) {
        dot += *x as f64 * *y as f64;
        na += *x as f64 * *x as f64;
        nb += *y as f64 * *y as f64;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(FeatureError::ZeroVector);
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

/// Index of the pool entry most similar to `query`; ties go to the lowest
/// index so results are reproducible.
pub fn arg_most_similar(query: &FeatureVec, pool: &[FeatureVec]) -> Result<usize, FeatureError> {
    scan(query, pool, |candidate, best| candidate > best)
}

/// Index of the pool entry least similar to `query`; ties to lowest index.
pub fn arg_most_dissimilar(query: &FeatureVec, pool: &[FeatureVec]) -> Result<usize, FeatureError> {
    scan(query, pool, |candidate, best| candidate < best)
}

fn scan(
    query: &FeatureVec,
    pool: &[FeatureVec],
    better: impl Fn(f64, f64) -> bool,
) -> Result<usize, FeatureError> {
    if pool.is_empty() {
        return Err(FeatureError::EmptyPool);
    }
    let mut best_idx = 0;
    let mut best = cosine_sim(query, &pool[0])?;
    for (i, cand) in pool.iter().enumerate().skip(1) {
        let sim = cosine_sim(query, cand)?;
        if better(sim, best) {
            best = sim;
            best_idx = i;
        }
    }
    Ok(best_idx)
}
