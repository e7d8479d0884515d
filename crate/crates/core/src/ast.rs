//! Adaptive state transition: the two-state controller that decides when
//! detection hands off to tracking and when tracking falls back.
//!
//! Entry: detections accumulate in a sliding window; tracking activates only
//! when the full window passes both quality and presence thresholds, and the
//! top-K window frames seed the tracker. Exit: every `check_interval`
//! tracked frames the detector is re-queried and the mask agreement votes
//! +1/-1 into a fixed-length queue; a full queue with a negative sum drops
//! the system back to detection.

use std::collections::VecDeque;

use thiserror::Error;

use crate::mask::{iou, BinaryMask, GeometryError};

#[derive(Debug, Error, PartialEq)]
pub enum AstError {
    #[error("operation requires {expected:?} state but controller is {actual:?}")]
    WrongState { expected: Stage, actual: Stage },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid controller config: {0}")]
    InvalidConfig(String),
}

/// Which half of the system owns the stream right now.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Detecting,
    Tracking,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AstConfig {
    /// Entry window length: consecutive passing detections required.
    pub window_size: usize,
    /// Quality threshold (strict) for both the entry gate and presence gate.
    pub delta_iou: f64,
    /// Presence threshold (strict), shared the same way.
    pub delta_p: f64,
    /// Number of window frames handed to the tracker on activation.
    pub top_k: usize,
    /// Tracked frames between consensus checks.
    pub check_interval: usize,
    /// Consensus vote queue length.
    pub queue_length: usize,
    /// Mask-agreement threshold (non-strict) for a positive vote.
    pub delta_c: f64,
}

impl Default for AstConfig {
    fn default() -> Self {
        AstConfig {
            window_size: 5,
            delta_iou: 0.7,
            delta_p: 0.5,
            top_k: 3,
            check_interval: 5,
            queue_length: 5,
            delta_c: 0.5,
        }
    }
}

impl AstConfig {
    pub fn validate(&self) -> Result<(), AstError> {
        if self.window_size < 1 || self.check_interval < 1 || self.queue_length < 1 {
            return Err(AstError::InvalidConfig("window, interval, and queue must be >= 1".into()));
        }
        if self.top_k < 1 || self.top_k > self.window_size {
            return Err(AstError::InvalidConfig(format!(
                "top_k {} must be in 1..=window_size {}",
                self.top_k, self.window_size
            )));
        }
        for (name, v) in [("delta_iou", self.delta_iou), ("delta_p", self.delta_p), ("delta_c", self.delta_c)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(AstError::InvalidConfig(format!("{name} {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// One buffered detection.
#[derive(Clone, Debug)]
pub struct Observation {
    pub frame_index: usize,
    pub s_iou: f64,
    pub s_p: f64,
    pub mask: BinaryMask,
}

/// Entry-gate decision: the window frames chosen to seed the tracker, in
/// ascending frame order.
#[derive(Clone, Debug)]
pub struct Activation {
    pub init: Vec<Observation>,
}

/// Issued every `check_interval` tracked frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckRequest {
    pub frame_index: usize,
}

/// Outcome of one consensus vote.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoteOutcome {
    pub vote: i8,
    pub masks_iou: f64,
    /// Queue sum, present once the queue is full.
    pub consensus: Option<i64>,
    pub fallback: bool,
}

#[derive(Clone, Debug)]
pub struct AstController {
    config: AstConfig,
    stage: Stage,
    entry_window: VecDeque<Observation>,
    vote_queue: VecDeque<i8>,
    frames_since_check: usize,
}

impl AstController {
    pub fn new(config: AstConfig) -> Result<Self, AstError> {
        config.validate()?;
        Ok(AstController {
            config,
            stage: Stage::Detecting,
            entry_window: VecDeque::new(),
            vote_queue: VecDeque::new(),
            frames_since_check: 0,
        })
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn config(&self) -> &AstConfig {
        &self.config
    }

    fn require(&self, expected: Stage) -> Result<(), AstError> {
        if self.stage != expected {
            return Err(AstError::WrongState { expected, actual: self.stage });
        }
        Ok(())
    }

    /// Buffer a detection. Activation fires when the window is full and
    /// every frame in it passes `s_iou > delta_iou && s_p > delta_p`; the
    /// controller then moves to tracking and returns the top-K frames by
    /// quality score (ties to the earlier frame).
    pub fn observe_detection(&mut self, obs: Observation) -> Result<Option<Activation>, AstError> {
        self.require(Stage::Detecting)?;
        self.entry_window.push_back(obs);
        while self.entry_window.len() > self.config.window_size {
            self.entry_window.pop_front();
        }
        if self.entry_window.len() < self.config.window_size {
            return Ok(None);
        }
        let all_pass = self
            .entry_window
            .iter()
            .all(|o| o.s_iou > self.config.delta_iou && o.s_p > self.config.delta_p);
        if !all_pass {
            return Ok(None);
        }

        let mut ranked: Vec<Observation> = self.entry_window.drain(..).collect();
        ranked.sort_by(|a, b| {
            b.s_iou
                .partial_cmp(&a.s_iou)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.frame_index.cmp(&b.frame_index))
        });
        ranked.truncate(self.config.top_k);
        ranked.sort_by_key(|o| o.frame_index);

        self.stage = Stage::Tracking;
        self.frames_since_check = 0;
        self.vote_queue.clear();
        Ok(Some(Activation { init: ranked }))
    }

    /// Count a tracked frame; returns a consensus-check request every
    /// `check_interval` frames.
    pub fn observe_tracking(&mut self, frame_index: usize) -> Result<Option<CheckRequest>, AstError> {
        self.require(Stage::Tracking)?;
        self.frames_since_check += 1;
        if self.frames_since_check >= self.config.check_interval {
            self.frames_since_check = 0;
            return Ok(Some(CheckRequest { frame_index }));
        }
        Ok(None)
    }

    /// Record one tracker-vs-detector agreement vote. Fallback fires only
    /// once the queue is full and its sum goes negative; the controller then
    /// reverts to detection with both buffers cleared (the caller must reset
    /// its tracking memory).
    pub fn record_vote(
        &mut self,
        tracked: &BinaryMask,
        detected: &BinaryMask,
    ) -> Result<VoteOutcome, AstError> {
        self.require(Stage::Tracking)?;
        let masks_iou = iou(tracked, detected)?;
        let vote: i8 = if masks_iou >= self.config.delta_c { 1 } else { -1 };
        self.vote_queue.push_back(vote);
        while self.vote_queue.len() > self.config.queue_length {
            self.vote_queue.pop_front();
        }
        let full = self.vote_queue.len() == self.config.queue_length;
        let consensus = full.then(|| self.vote_queue.iter().map(|v| *v as i64).sum());
        let fallback = matches!(consensus, Some(s) if s < 0);
        if fallback {
            self.stage = Stage::Detecting;
            self.vote_queue.clear();
            self.entry_window.clear();
            self.frames_since_check = 0;
        }
        Ok(VoteOutcome { vote, masks_iou, consensus, fallback })
    }

    /// Revert to detection with empty buffers and zeroed counters.
    pub fn reset(&mut self) {
        self.stage = Stage::Detecting;
        self.entry_window.clear();
        self.vote_queue.clear();
        self.frames_since_check = 0;
    }

    pub fn entry_window_len(&self) -> usize {
        self.entry_window.len()
    }

    pub fn vote_queue_len(&self) -> usize {
        self.vote_queue.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask() -> BinaryMask {
        BinaryMask::filled(4, 4)
    }

    fn obs(frame: usize, s_iou: f64, s_p: f64) -> Observation {
        Observation { frame_index: frame, s_iou, s_p, mask: mask() }
    }

    fn controller(window: usize, top_k: usize) -> AstController {
        AstController::new(AstConfig {
            window_size: window,
            top_k,
            ..AstConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn activation_needs_full_passing_window() {
        let mut c = controller(3, 2);
        assert!(c.observe_detection(obs(0, 0.8, 0.6)).unwrap().is_none());
        assert!(c.observe_detection(obs(1, 0.75, 0.9)).unwrap().is_none());
        let act = c.observe_detection(obs(2, 0.9, 0.8)).unwrap().unwrap();
        assert_eq!(c.stage(), Stage::Tracking);
        assert_eq!(c.entry_window_len(), 0);
        let frames: Vec<usize> = act.init.iter().map(|o| o.frame_index).collect();
        // Top-2 by s_iou are frames 2 (0.9) and 0 (0.8), returned in order.
        assert_eq!(frames, vec![0, 2]);
    }

    #[test]
    fn failing_frame_blocks_until_it_slides_out() {
        let mut c = controller(3, 2);
        c.observe_detection(obs(0, 0.8, 0.9)).unwrap();
        c.observe_detection(obs(1, 0.8, 0.4)).unwrap();
        assert!(c.observe_detection(obs(2, 0.9, 0.9)).unwrap().is_none());
        assert!(c.observe_detection(obs(3, 0.9, 0.9)).unwrap().is_none());
        // Frame 1 leaves the window here.
        assert!(c.observe_detection(obs(4, 0.9, 0.9)).unwrap().is_some());
    }

    #[test]
    fn threshold_is_strict() {
        let mut c = controller(2, 1);
        // Scores exactly at the thresholds never pass.
        assert!(c.observe_detection(obs(0, 0.7, 0.9)).unwrap().is_none());
        assert!(c.observe_detection(obs(1, 0.7, 0.9)).unwrap().is_none());
        assert!(c.observe_detection(obs(2, 0.9, 0.5)).unwrap().is_none());
        assert!(c.observe_detection(obs(3, 0.71, 0.51)).unwrap().is_none());
        assert!(c.observe_detection(obs(4, 0.71, 0.51)).unwrap().is_some());
    }

    #[test]
    fn top_k_ties_prefer_earlier_frame() {
        let mut c = controller(3, 2);
        c.observe_detection(obs(0, 0.8, 0.9)).unwrap();
        c.observe_detection(obs(1, 0.8, 0.9)).unwrap();
        let act = c.observe_detection(obs(2, 0.8, 0.9)).unwrap().unwrap();
        let frames: Vec<usize> = act.init.iter().map(|o| o.frame_index).collect();
        assert_eq!(frames, vec![0, 1]);
    }

    #[test]
    fn wrong_state_errors() {
        let mut c = controller(1, 1);
        assert!(matches!(c.observe_tracking(0), Err(AstError::WrongState { .. })));
        c.observe_detection(obs(0, 0.9, 0.9)).unwrap();
        assert!(matches!(
            c.observe_detection(obs(1, 0.9, 0.9)),
            Err(AstError::WrongState { .. })
        ));
    }

    #[test]
    fn check_requests_every_interval() {
        let mut c = controller(1, 1);
        c.observe_detection(obs(0, 0.9, 0.9)).unwrap();
        let mut requested = Vec::new();
        for frame in 1..=16 {
            if c.observe_tracking(frame).unwrap().is_some() {
                requested.push(frame);
            }
        }
        // Interval 5: the 5th, 10th, and 15th tracked frames.
        assert_eq!(requested, vec![5, 10, 15]);
    }

    #[test]
    fn interval_one_requests_every_frame() {
        let mut c = AstController::new(AstConfig {
            window_size: 1,
            top_k: 1,
            check_interval: 1,
            ..AstConfig::default()
        })
        .unwrap();
        c.observe_detection(obs(0, 0.9, 0.9)).unwrap();
        for frame in 1..5 {
            assert!(c.observe_tracking(frame).unwrap().is_some());
        }
    }

    #[test]
    fn fallback_requires_full_negative_queue() {
        let mut c = controller(1, 1);
        c.observe_detection(obs(0, 0.9, 0.9)).unwrap();
        let full = mask();
        let empty = BinaryMask::new(4, 4);
        // Four straight disagreements: queue not yet full, no fallback.
        for _ in 0..4 {
            let out = c.record_vote(&full, &empty).unwrap();
            assert!(!out.fallback);
            assert_eq!(out.vote, -1);
            assert_eq!(out.consensus, None);
        }
        let out = c.record_vote(&full, &empty).unwrap();
        assert_eq!(out.consensus, Some(-5));
        assert!(out.fallback);
        assert_eq!(c.stage(), Stage::Detecting);
        assert_eq!(c.vote_queue_len(), 0);
    }

    #[test]
    fn drift_after_agreement_falls_back_on_third_bad_check() {
        let mut c = controller(1, 1);
        c.observe_detection(obs(0, 0.9, 0.9)).unwrap();
        let full = mask();
        let empty = BinaryMask::new(4, 4);
        for _ in 0..5 {
            assert!(!c.record_vote(&full, &full).unwrap().fallback);
        }
        // Sums run 3, 1, -1 as -1 votes displace +1s.
        let s1 = c.record_vote(&full, &empty).unwrap();
        assert_eq!((s1.consensus, s1.fallback), (Some(3), false));
        let s2 = c.record_vote(&full, &empty).unwrap();
        assert_eq!((s2.consensus, s2.fallback), (Some(1), false));
        let s3 = c.record_vote(&full, &empty).unwrap();
        assert_eq!((s3.consensus, s3.fallback), (Some(-1), true));
    }

    #[test]
    fn vote_threshold_is_non_strict() {
        let mut c = controller(1, 1);
        c.observe_detection(obs(0, 0.9, 0.9)).unwrap();
        // IoU exactly 0.5 counts as agreement.
        let a = BinaryMask::from_fn(4, 1, |x, _| x < 3);
        let b = BinaryMask::from_fn(4, 1, |x, _| x >= 1);
        let out = c.record_vote(&a, &b).unwrap();
        assert_eq!(out.masks_iou, 0.5);
        assert_eq!(out.vote, 1);
    }

    #[test]
    fn reset_clears_everything() {
        let mut c = controller(2, 1);
        c.observe_detection(obs(0, 0.9, 0.9)).unwrap();
        c.reset();
        assert_eq!(c.stage(), Stage::Detecting);
        assert_eq!(c.entry_window_len(), 0);
        // Idempotent on a fresh controller.
        let mut fresh = controller(2, 1);
        fresh.reset();
        assert_eq!(fresh.stage(), Stage::Detecting);
        // Accepts detections again after reset.
        assert!(c.observe_detection(obs(5, 0.9, 0.9)).unwrap().is_none());
    }

    #[test]
    fn random_sequences_only_make_legal_transitions() {
        use crate::rng::SplitMix64;
        let mut rng = SplitMix64::new(9001);
        let mut c = controller(3, 2);
        let full = mask();
        let empty = BinaryMask::new(4, 4);
        let mut consecutive_passes = 0usize;
        for i in 0..2000 {
            match c.stage() {
                Stage::Detecting => {
                    let pass = rng.next_f64() < 0.7;
                    let (si, sp) = if pass { (0.9, 0.9) } else { (0.2, 0.2) };
                    let act = c.observe_detection(obs(i, si, sp)).unwrap();
                    consecutive_passes = if pass { consecutive_passes + 1 } else { 0 };
                    match act {
                        Some(_) => {
                            assert!(consecutive_passes >= 3, "activated before a full window");
                            assert_eq!(c.stage(), Stage::Tracking);
                            consecutive_passes = 0;
                        }
                        None => assert_eq!(c.stage(), Stage::Detecting),
                    }
                }
                Stage::Tracking => {
                    if c.observe_tracking(i).unwrap().is_some() {
                        let agree = rng.next_f64() < 0.5;
                        let out = c.record_vote(&full, if agree { &full } else { &empty }).unwrap();
                        if out.fallback {
                            assert_eq!(c.stage(), Stage::Detecting);
                            assert_eq!(c.vote_queue_len(), 0);
                            assert_eq!(c.entry_window_len(), 0);
                        }
                    }
                }
            }
        }
    }
}
