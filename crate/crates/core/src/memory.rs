//! Tracking memory: a short-term FIFO, the initial-frame store, and a
//! diversity-managed long-term bank fed through a candidate pool.
//!
//! High-confidence frames accumulate in the pool; when it fills, the
//! candidate least similar to the last long-term insertion is committed,
//! and at capacity the stored entry most similar to the newcomer is
//! replaced. Insertion favours novelty, eviction removes redundancy.

use std::collections::{HashSet, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::feature::{arg_most_dissimilar, arg_most_similar, FeatureError, FeatureVec};
use crate::mask::{boundary_map, BinaryMask, BoundaryMap, GeometryError};

#[derive(Debug, Error, PartialEq)]
pub enum MemoryError {
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error("memory bank has no initial entries; tracking is not active")]
    NotActive,
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid memory config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct MemoryConfig {
    /// Short-term FIFO capacity.
    pub short_capacity: usize,
    /// Long-term bank capacity.
    pub long_capacity: usize,
    /// Candidate-pool size that triggers a long-term commit.
    pub pool_capacity: usize,
    /// Quality threshold a frame must exceed (strictly) to become a
    /// candidate.
    pub gamma_iou: f64,
    /// Side length of the occupancy-pooling grid used when fusing entries.
    pub pooling_grid: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            short_capacity: 7,
            long_capacity: 16,
            pool_capacity: 5,
            gamma_iou: 0.8,
            pooling_grid: 4,
        }
    }
}

impl MemoryConfig {
    pub fn validate(&self) -> Result<(), MemoryError> {
        if self.short_capacity < 1 || self.long_capacity < 1 || self.pool_capacity < 1 {
            return Err(MemoryError::InvalidConfig("capacities must be >= 1".into()));
        }
        if self.pooling_grid < 1 {
            return Err(MemoryError::InvalidConfig("pooling grid must be >= 1".into()));
        }
        if !(self.gamma_iou > 0.0 && self.gamma_iou < 1.0) {
            return Err(MemoryError::InvalidConfig(format!(
                "gamma_iou {} outside (0, 1)",
                self.gamma_iou
            )));
        }
        Ok(())
    }
}

/// One remembered frame: appearance feature, mask, boundary, the fused
/// representation retrieval works on, and the quality score it arrived with.
#[derive(Clone, Debug)]
pub struct MemoryEntry {
    pub frame_index: usize,
    pub feature: FeatureVec,
    pub mask: BinaryMask,
    pub boundary: BoundaryMap,
    pub fused: FeatureVec,
    pub s_iou: f64,
}

impl MemoryEntry {
    /// Derive boundary and fused representation from the raw parts.
    pub fn build(
        frame_index: usize,
        feature: FeatureVec,
        mask: BinaryMask,
        s_iou: f64,
        pooling_grid: usize,
    ) -> Result<Self, MemoryError> {
        let boundary = boundary_map(&mask);
        let fused = fuse_entry(&feature, &mask, &boundary, pooling_grid)?;
        Ok(MemoryEntry { frame_index, feature, mask, boundary, fused, s_iou })
    }
}

/// Fuse appearance with geometry: the raw feature concatenated with g x g
/// average-pooled occupancy of the mask and of the boundary (2g^2 extra
/// values in [0, 1]). Any occupancy change in a pooled cell changes the
/// output, so retrieval sees both semantics and shape.
pub fn fuse_entry(
    feature: &FeatureVec,
    mask: &BinaryMask,
    boundary: &BoundaryMap,
    grid: usize,
) -> Result<FeatureVec, MemoryError> {
    if mask.dims() != boundary.as_mask().dims() {
        return Err(MemoryError::Geometry(GeometryError::ShapeMismatch {
            a: mask.dims(),
            b: boundary.as_mask().dims(),
        }));
    }
    let mut extra = Vec::with_capacity(2 * grid * grid);
    pooled_occupancy(mask, grid, &mut extra);
    pooled_occupancy(boundary.as_mask(), grid, &mut extra);
    Ok(feature.extended(&extra))
}

fn pooled_occupancy(mask: &BinaryMask, grid: usize, out: &mut Vec<f32>) {
    let (w, h) = mask.dims();
    for gy in 0..grid {
        let y0 = gy * h / grid;
        let y1 = (gy + 1) * h / grid;
        for gx in 0..grid {
            let x0 = gx * w / grid;
            let x1 = (gx + 1) * w / grid;
            let area = (x1 - x0) * (y1 - y0);
            if area == 0 {
                out.push(0.0);
            } else {
                out.push(mask.count_in_rect(x0, x1, y0, y1) as f32 / area as f32);
            }
        }
    }
}

/// Result of a long-term commit: what went in and what, if anything, it
/// displaced.
#[derive(Clone, Debug)]
pub struct CommitEvent {
    pub inserted: MemoryEntry,
    pub evicted: Option<MemoryEntry>,
}

/// Where an entry currently lives, for debug dumps.
#[derive(Clone, Debug, Serialize)]
pub struct MemorySnapshotRecord {
    pub frame_index: usize,
    pub s_iou: f64,
    pub tier: &'static str,
}

/// Per-stream tracking memory. One bank per video stream; mutation is
/// single-threaded per stream, distinct banks may run concurrently.
#[derive(Clone, Debug)]
pub struct MemoryBank {
    config: MemoryConfig,
    initial: Vec<MemoryEntry>,
    short_term: VecDeque<MemoryEntry>,
    long_term: Vec<MemoryEntry>,
    /// Slot of the most recently committed long-term entry.
    last_inserted: Option<usize>,
    pool: Vec<MemoryEntry>,
}

impl MemoryBank {
    pub fn new(config: MemoryConfig) -> Result<Self, MemoryError> {
        config.validate()?;
        Ok(MemoryBank {
            config,
            initial: Vec::new(),
            short_term: VecDeque::new(),
            long_term: Vec::new(),
            last_inserted: None,
            pool: Vec::new(),
        })
    }

    pub fn config(&self) -> &MemoryConfig {
        &self.config
    }

    /// Install the activation frames. Clears any previous stream state.
    pub fn activate(&mut self, initial: Vec<MemoryEntry>) {
        self.reset();
        self.initial = initial;
    }

    pub fn is_active(&self) -> bool {
        !self.initial.is_empty()
    }

    /// Drop everything; used on fallback re-initialization.
    pub fn reset(&mut self) {
        self.initial.clear();
        self.short_term.clear();
        self.long_term.clear();
        self.last_inserted = None;
        self.pool.clear();
    }

    /// Append to the short-term FIFO, evicting the oldest past capacity.
    pub fn push_short_term(&mut self, entry: MemoryEntry) {
        self.short_term.push_back(entry);
        while self.short_term.len() > self.config.short_capacity {
            self.short_term.pop_front();
        }
    }

    /// Offer a frame to the candidate pool. Only frames whose quality score
    /// strictly exceeds `gamma_iou` qualify; when the pool reaches capacity
    /// a long-term commit fires and the pool is cleared.
    pub fn offer_candidate(&mut self, entry: MemoryEntry) -> Result<Option<CommitEvent>, MemoryError> {
        if entry.s_iou <= self.config.gamma_iou {
            return Ok(None);
        }
        self.pool.push(entry);
        if self.pool.len() >= self.config.pool_capacity {
            return self.commit_long_term().map(Some);
        }
        Ok(None)
    }

    /// Commit one pool candidate to long-term memory and clear the pool.
    ///
    /// The candidate least similar to the last inserted long-term entry is
    /// chosen (pool slot 0 when there is no reference yet). At capacity the
    /// stored entry most similar to the newcomer is replaced.
    pub fn commit_long_term(&mut self) -> Result<CommitEvent, MemoryError> {
        if self.pool.is_empty() {
            return Err(MemoryError::EmptyPool);
        }
        let pick = match self.last_inserted {
            Some(slot) if !self.long_term.is_empty() => {
                let reference = &self.long_term[slot].feature;
                let pool_features: Vec<FeatureVec> =
                    self.pool.iter().map(|e| e.feature.clone()).collect();
                arg_most_dissimilar(reference, &pool_features)?
            }
            _ => 0,
        };
        let incoming = self.pool.remove(pick);
        self.pool.clear();

        let evicted = if self.long_term.len() < self.config.long_capacity {
            self.long_term.push(incoming);
            self.last_inserted = Some(self.long_term.len() - 1);
            None
        } else {
            let stored_features: Vec<FeatureVec> =
                self.long_term.iter().map(|e| e.feature.clone()).collect();
            let victim = arg_most_similar(&incoming.feature, &stored_features)?;
            let old = std::mem::replace(&mut self.long_term[victim], incoming);
            self.last_inserted = Some(victim);
            Some(old)
        };
        let inserted = self.long_term[self.last_inserted.unwrap()].clone();
        Ok(CommitEvent { inserted, evicted })
    }

    /// Retrieval context: initial entries, then long-term, then short-term,
    /// deduplicated by frame index with the first occurrence kept.
    pub fn assemble_context(&self) -> Result<Vec<&MemoryEntry>, MemoryError> {
        if !self.is_active() {
            return Err(MemoryError::NotActive);
        }
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for entry in self
            .initial
            .iter()
            .chain(self.long_term.iter())
            .chain(self.short_term.iter())
        {
            if seen.insert(entry.frame_index) {
                out.push(entry);
            }
        }
        Ok(out)
    }

    pub fn initial_entries(&self) -> &[MemoryEntry] {
        &self.initial
    }

    pub fn short_term_entries(&self) -> impl Iterator<Item = &MemoryEntry> {
        self.short_term.iter()
    }

    pub fn long_term_entries(&self) -> &[MemoryEntry] {
        &self.long_term
    }

    pub fn pool_entries(&self) -> &[MemoryEntry] {
        &self.pool
    }

    pub fn last_inserted_entry(&self) -> Option<&MemoryEntry> {
        self.last_inserted.map(|i| &self.long_term[i])
    }

    /// Flat view of the bank for the CLI debug dump.
    pub fn snapshot(&self) -> Vec<MemorySnapshotRecord> {
        let record = |tier: &'static str| {
            move |e: &MemoryEntry| MemorySnapshotRecord {
                frame_index: e.frame_index,
                s_iou: e.s_iou,
                tier,
            }
        };
        self.initial
            .iter()
            .map(record("initial"))
            .chain(self.long_term.iter().map(record("long")))
            .chain(self.short_term.iter().map(record("short")))
            .chain(self.pool.iter().map(record("pool")))
            .collect()
    }
}
