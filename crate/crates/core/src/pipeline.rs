//! The per-frame engine: prompt routing, detector/tracker contracts,
//! presence gating, granularity selection, and the wiring between tracking
//! memory and the state-transition controller.
//!
//! Visual prompts carry their own spatial confirmation, so they activate
//! tracking on the prompt frame directly. Linguistic prompts run the
//! detection stage under the entry gate, and while tracking they are
//! periodically re-verified against the detector; a lost consensus falls
//! back to detection and resets the tracking memory.

use serde::Serialize;
use thiserror::Error;

use crate::ast::{AstConfig, AstController, AstError, Observation, Stage};
use crate::mask::{BinaryMask, GeometryError};
use crate::masklet::Masklet;
use crate::memory::{MemoryBank, MemoryConfig, MemoryEntry, MemoryError};
use crate::feature::Embedder;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid prompt: {0}")]
    InvalidPrompt(String),
    #[error("video must contain at least one frame")]
    EmptyVideo,
    #[error(transparent)]
    Ast(#[from] AstError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A point prompt: pixel coordinates plus a positive/negative label.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PointPrompt {
    pub x: usize,
    pub y: usize,
    pub positive: bool,
}

/// User prompt naming the target. Audio arrives pre-transcribed.
#[derive(Clone, Debug)]
pub enum Prompt {
    Points(Vec<PointPrompt>),
    Box { x0: usize, y0: usize, x1: usize, y1: usize },
    Mask(BinaryMask),
    Text(String),
    AudioTranscript { expression: String, source: String },
}

impl Prompt {
    /// Check coordinate bounds and non-empty expressions against a frame.
    pub fn validate(&self, frame_size: (usize, usize)) -> Result<(), PipelineError> {
        let (w, h) = frame_size;
        match self {
            Prompt::Points(points) => {
                if points.is_empty() {
                    return Err(PipelineError::InvalidPrompt("no points given".into()));
                }
                for p in points {
                    if p.x >= w || p.y >= h {
                        return Err(PipelineError::InvalidPrompt(format!(
                            "point ({}, {}) outside {}x{} frame",
                            p.x, p.y, w, h
                        )));
                    }
                }
            }
            Prompt::Box { x0, y0, x1, y1 } => {
                if x0 >= x1 || y0 >= y1 || *x1 > w || *y1 > h {
                    return Err(PipelineError::InvalidPrompt(format!(
                        "box ({x0}, {y0})-({x1}, {y1}) invalid for {w}x{h} frame"
                    )));
                }
            }
            Prompt::Mask(m) => {
                if m.dims() != frame_size {
                    return Err(PipelineError::InvalidPrompt(format!(
                        "mask dims {:?} do not match frame {:?}",
                        m.dims(),
                        frame_size
                    )));
                }
            }
            Prompt::Text(e) | Prompt::AudioTranscript { expression: e, .. } => {
                if e.trim().is_empty() {
                    return Err(PipelineError::InvalidPrompt("empty expression".into()));
                }
            }
        }
        Ok(())
    }
}

/// Lowercase and strip punctuation so transcribed audio and typed text meet
/// the detector in the same form.
pub fn normalize_expression(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for ch in raw.chars() {
        if ch.is_alphanumeric() || ch == '-' {
            out.extend(ch.to_lowercase());
        } else if ch.is_whitespace() || ch.is_ascii_punctuation() {
            out.push(' ');
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Target hierarchy level of one detector candidate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Whole,
    Part,
    Subpart,
}

#[derive(Clone, Debug)]
pub struct GranularityCandidate {
    pub mask: BinaryMask,
    pub s_iou: f64,
    pub level: Granularity,
}

/// One detection: three candidate masks (whole, part, subpart) plus a
/// presence score for the queried target.
#[derive(Clone, Debug)]
pub struct DetectorOutput {
    candidates: [GranularityCandidate; 3],
    pub s_p: f64,
}

impl DetectorOutput {
    pub fn new(
        whole: (BinaryMask, f64),
        part: (BinaryMask, f64),
        subpart: (BinaryMask, f64),
        s_p: f64,
    ) -> Self {
        DetectorOutput {
            candidates: [
                GranularityCandidate { mask: whole.0, s_iou: whole.1, level: Granularity::Whole },
                GranularityCandidate { mask: part.0, s_iou: part.1, level: Granularity::Part },
                GranularityCandidate {
                    mask: subpart.0,
                    s_iou: subpart.1,
                    level: Granularity::Subpart,
                },
            ],
            s_p,
        }
    }

    pub fn candidates(&self) -> &[GranularityCandidate; 3] {
        &self.candidates
    }
}

#[derive(Clone, Debug)]
pub struct TrackerOutput {
    pub mask: BinaryMask,
    pub s_iou: f64,
    pub s_p: f64,
}

/// Target-initialization contract: maps a frame and an expression to a
/// multi-granularity detection. Deterministic for identical inputs in a run.
pub trait Detector {
    fn detect(&self, frame_index: usize, expression: &str) -> DetectorOutput;
}

/// Long-term tracking contract. `init` installs the activation masks;
/// `track` propagates them one frame using the retrieval context.
pub trait Tracker {
    fn init(&mut self, frames: &[(usize, BinaryMask)]);
    fn track(&mut self, frame_index: usize, context: &[&MemoryEntry]) -> TrackerOutput;
}

/// Candidate with the highest quality score wins; ties resolve toward the
/// coarser level (whole over part over subpart).
pub fn select_granularity(out: &DetectorOutput) -> &GranularityCandidate {
    let mut best = &out.candidates[0];
    for cand in &out.candidates[1..] {
        if cand.s_iou > best.s_iou {
            best = cand;
        }
    }
    best
}

/// Presence verdict: the best candidate must pass both thresholds strictly.
pub fn presence_gate(out: &DetectorOutput, cfg: &AstConfig) -> bool {
    let best = select_granularity(out);
    best.s_iou > cfg.delta_iou && out.s_p > cfg.delta_p
}

/// State-machine events surfaced on the log channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Activation,
    Check,
    Fallback,
}

#[derive(Clone, Debug, Serialize)]
pub struct TransitionEvent {
    pub frame: usize,
    pub event: EventKind,
    pub detail: serde_json::Value,
}

impl TransitionEvent {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }
}

/// Per-frame engine result.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub frame_index: usize,
    /// Empty when the target is judged absent.
    pub mask: BinaryMask,
    pub present: bool,
    pub state: Stage,
    pub events: Vec<TransitionEvent>,
    /// (s_iou, s_p) of whichever contract produced the mask.
    pub scores: (f64, f64),
}

/// Prompt after modality-specific resolution: visual prompts become an init
/// mask on a known frame, linguistic prompts a normalized expression.
#[derive(Clone, Debug)]
pub enum ResolvedPrompt {
    Visual { prompt_frame: usize, init_mask: BinaryMask },
    Linguistic { expression: String },
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub ast: AstConfig,
    pub memory: MemoryConfig,
    /// Consensus-based fallback on linguistic streams. Visual streams have
    /// no expression to re-query, so the exit gate never applies to them.
    pub exit_gate: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            ast: AstConfig::default(),
            memory: MemoryConfig::default(),
            exit_gate: true,
        }
    }
}

/// Everything produced by a full video run.
#[derive(Clone, Debug)]
pub struct VideoRun {
    pub masklet: Masklet,
    pub events: Vec<TransitionEvent>,
    pub outputs: Vec<StepOutput>,
}

/// One engine per (video, prompt) pair; single-threaded per stream.
pub struct Engine {
    detector: Box<dyn Detector>,
    tracker: Box<dyn Tracker>,
    embedder: Box<dyn Embedder>,
    config: EngineConfig,
    prompt: ResolvedPrompt,
    frame_size: (usize, usize),
    ast: AstController,
    memory: MemoryBank,
    /// Tracking latch for the visual route, which bypasses the controller.
    visual_active: bool,
}

impl Engine {
    pub fn new(
        detector: Box<dyn Detector>,
        tracker: Box<dyn Tracker>,
        embedder: Box<dyn Embedder>,
        prompt: ResolvedPrompt,
        frame_size: (usize, usize),
        config: EngineConfig,
    ) -> Result<Self, PipelineError> {
        match &prompt {
            ResolvedPrompt::Visual { init_mask, .. } => {
                if init_mask.dims() != frame_size {
                    return Err(PipelineError::InvalidPrompt(format!(
                        "init mask dims {:?} do not match frame {:?}",
                        init_mask.dims(),
                        frame_size
                    )));
                }
                if init_mask.is_empty() {
                    return Err(PipelineError::InvalidPrompt("visual init mask is empty".into()));
                }
            }
            ResolvedPrompt::Linguistic { expression } => {
                if expression.trim().is_empty() {
                    return Err(PipelineError::InvalidPrompt("empty expression".into()));
                }
            }
        }
        let ast = AstController::new(config.ast.clone())?;
        let memory = MemoryBank::new(config.memory.clone())?;
        Ok(Engine {
            detector,
            tracker,
            embedder,
            config,
            prompt,
            frame_size,
            ast,
            memory,
            visual_active: false,
        })
    }

    pub fn frame_size(&self) -> (usize, usize) {
        self.frame_size
    }

    pub fn stage(&self) -> Stage {
        match &self.prompt {
            ResolvedPrompt::Visual { .. } => {
                if self.visual_active {
                    Stage::Tracking
                } else {
                    Stage::Detecting
                }
            }
            ResolvedPrompt::Linguistic { .. } => self.ast.stage(),
        }
    }

    pub fn memory(&self) -> &MemoryBank {
        &self.memory
    }

    fn empty_mask(&self) -> BinaryMask {
        BinaryMask::new(self.frame_size.0, self.frame_size.1)
    }

    fn build_entry(&self, frame: usize, mask: BinaryMask, s_iou: f64) -> Result<MemoryEntry, MemoryError> {
        MemoryEntry::build(
            frame,
            self.embedder.embed(frame),
            mask,
            s_iou,
            self.memory.config().pooling_grid,
        )
    }

    /// Advance one frame.
    pub fn step(&mut self, frame_index: usize) -> Result<StepOutput, PipelineError> {
        match self.prompt.clone() {
            ResolvedPrompt::Visual { prompt_frame, init_mask } => {
                self.step_visual(frame_index, prompt_frame, &init_mask)
            }
            ResolvedPrompt::Linguistic { expression } => {
                self.step_linguistic(frame_index, &expression)
            }
        }
    }

    fn step_visual(
        &mut self,
        frame_index: usize,
        prompt_frame: usize,
        init_mask: &BinaryMask,
    ) -> Result<StepOutput, PipelineError> {
        if !self.visual_active {
            if frame_index < prompt_frame {
                // No prompt yet: nothing to segment.
                return Ok(StepOutput {
                    frame_index,
                    mask: self.empty_mask(),
                    present: false,
                    state: Stage::Detecting,
                    events: Vec::new(),
                    scores: (0.0, 0.0),
                });
            }
            // Prompt frame: activate tracking directly.
            self.tracker.init(&[(frame_index, init_mask.clone())]);
            let entry = self.build_entry(frame_index, init_mask.clone(), 1.0)?;
            self.memory.activate(vec![entry]);
            self.visual_active = true;
            let event = TransitionEvent {
                frame: frame_index,
                event: EventKind::Activation,
                detail: serde_json::json!({ "route": "visual", "init_frames": [frame_index] }),
            };
            return Ok(StepOutput {
                frame_index,
                mask: init_mask.clone(),
                present: true,
                state: Stage::Tracking,
                events: vec![event],
                scores: (1.0, 1.0),
            });
        }

        let (output, _) = self.tracking_step(frame_index)?;
        Ok(output)
    }

    fn step_linguistic(
        &mut self,
        frame_index: usize,
        expression: &str,
    ) -> Result<StepOutput, PipelineError> {
        match self.ast.stage() {
            Stage::Detecting => self.detecting_step(frame_index, expression),
            Stage::Tracking => {
                let (mut output, check_frame) = self.tracking_step(frame_index)?;
                if let Some(_frame) = check_frame {
                    if self.config.exit_gate {
                        self.consensus_check(frame_index, expression, &mut output)?;
                    }
                }
                Ok(output)
            }
        }
    }

    fn detecting_step(
        &mut self,
        frame_index: usize,
        expression: &str,
    ) -> Result<StepOutput, PipelineError> {
        let det = self.detector.detect(frame_index, expression);
        let best = select_granularity(&det).clone();
        let present = presence_gate(&det, &self.config.ast);
        let emitted = if present { best.mask.clone() } else { self.empty_mask() };

        let mut events = Vec::new();
        let activation = self.ast.observe_detection(Observation {
            frame_index,
            s_iou: best.s_iou,
            s_p: det.s_p,
            mask: best.mask,
        })?;
        if let Some(act) = activation {
            let init_frames: Vec<usize> = act.init.iter().map(|o| o.frame_index).collect();
            let pairs: Vec<(usize, BinaryMask)> =
                act.init.iter().map(|o| (o.frame_index, o.mask.clone())).collect();
            self.tracker.init(&pairs);
            let mut entries = Vec::with_capacity(act.init.len());
            for obs in &act.init {
                entries.push(self.build_entry(obs.frame_index, obs.mask.clone(), obs.s_iou)?);
            }
            self.memory.activate(entries);
            events.push(TransitionEvent {
                frame: frame_index,
                event: EventKind::Activation,
                detail: serde_json::json!({ "route": "linguistic", "init_frames": init_frames }),
            });
        }

        Ok(StepOutput {
            frame_index,
            mask: emitted,
            present,
            state: self.stage(),
            events,
            scores: (best.s_iou, det.s_p),
        })
    }

    /// Shared tracking-frame body: propagate, update memory, count the frame
    /// toward the next consensus check. Returns the output plus the check
    /// request, which only the linguistic route acts on.
    fn tracking_step(
        &mut self,
        frame_index: usize,
    ) -> Result<(StepOutput, Option<usize>), PipelineError> {
        let context = self.memory.assemble_context()?;
        let t_out = self.tracker.track(frame_index, &context);
        drop(context);

        let entry = self.build_entry(frame_index, t_out.mask.clone(), t_out.s_iou)?;
        self.memory.push_short_term(entry.clone());
        self.memory.offer_candidate(entry)?;

        let check = match &self.prompt {
            ResolvedPrompt::Linguistic { .. } => {
                self.ast.observe_tracking(frame_index)?.map(|req| req.frame_index)
            }
            ResolvedPrompt::Visual { .. } => None,
        };

        let present = !t_out.mask.is_empty();
        let output = StepOutput {
            frame_index,
            mask: t_out.mask,
            present,
            state: Stage::Tracking,
            events: Vec::new(),
            scores: (t_out.s_iou, t_out.s_p),
        };
        Ok((output, check))
    }

    /// Query the detector, vote on mask agreement, and on fallback replace
    /// the frame's output with the detector's gated result: the tracker mask
    /// was just discredited, so it is not reported.
    fn consensus_check(
        &mut self,
        frame_index: usize,
        expression: &str,
        output: &mut StepOutput,
    ) -> Result<(), PipelineError> {
        let det = self.detector.detect(frame_index, expression);
        let best = select_granularity(&det).clone();
        let det_present = presence_gate(&det, &self.config.ast);
        let reference = if det_present { best.mask.clone() } else { self.empty_mask() };

        let outcome = self.ast.record_vote(&output.mask, &reference)?;
        output.events.push(TransitionEvent {
            frame: frame_index,
            event: EventKind::Check,
            detail: serde_json::json!({
                "vote": outcome.vote,
                "iou": outcome.masks_iou,
                "consensus": outcome.consensus,
            }),
        });

        if outcome.fallback {
            self.memory.reset();
            output.events.push(TransitionEvent {
                frame: frame_index,
                event: EventKind::Fallback,
                detail: serde_json::json!({ "consensus": outcome.consensus }),
            });
            output.mask = reference;
            output.present = det_present && !output.mask.is_empty();
            output.state = Stage::Detecting;
            output.scores = (best.s_iou, det.s_p);
        }
        Ok(())
    }

    /// Run frames `0..num_frames`, folding the per-frame outputs into a
    /// masklet (absent frames stay gaps) and an ordered event log.
    pub fn run_video(&mut self, num_frames: usize) -> Result<VideoRun, PipelineError> {
        if num_frames == 0 {
            return Err(PipelineError::EmptyVideo);
        }
        let mut masklet = Masklet::new();
        let mut events = Vec::new();
        let mut outputs = Vec::with_capacity(num_frames);
        for frame in 0..num_frames {
            let out = self.step(frame)?;
            masklet.insert(frame, out.mask.clone());
            events.extend(out.events.iter().cloned());
            outputs.push(out);
        }
        Ok(VideoRun { masklet, events, outputs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::RefCell;
    use std::rc::Rc;

    use crate::feature::FeatureVec;

    struct FixedEmbedder {
        dim: usize,
    }

    impl Embedder for FixedEmbedder {
        fn embed(&self, frame_index: usize) -> FeatureVec {
            let mut v = vec![0.25f32; self.dim];
            v[frame_index % self.dim] = 1.0;
            FeatureVec::new(v).unwrap()
        }
    }

    /// Scripted detector over a fixed per-frame schedule of
    /// (mask, s_iou, s_p); records every call it receives.
    struct ScheduleDetector {
        schedule: Vec<(BinaryMask, f64, f64)>,
        calls: Rc<RefCell<Vec<usize>>>,
    }

    impl Detector for ScheduleDetector {
        fn detect(&self, frame_index: usize, _expression: &str) -> DetectorOutput {
            self.calls.borrow_mut().push(frame_index);
            let (mask, s_iou, s_p) = self.schedule[frame_index].clone();
            DetectorOutput::new(
                (mask.clone(), s_iou),
                (mask.clone(), s_iou * 0.5),
                (mask, s_iou * 0.25),
                s_p,
            )
        }
    }

    struct ScheduleTracker {
        schedule: Vec<(BinaryMask, f64)>,
        calls: Rc<RefCell<Vec<usize>>>,
        inits: Rc<RefCell<Vec<Vec<usize>>>>,
    }

    impl Tracker for ScheduleTracker {
        fn init(&mut self, frames: &[(usize, BinaryMask)]) {
            self.inits
                .borrow_mut()
                .push(frames.iter().map(|(f, _)| *f).collect());
        }

        fn track(&mut self, frame_index: usize, _context: &[&MemoryEntry]) -> TrackerOutput {
            self.calls.borrow_mut().push(frame_index);
            let (mask, s_iou) = self.schedule[frame_index].clone();
            TrackerOutput { mask, s_iou, s_p: 1.0 }
        }
    }

    const W: usize = 16;
    const H: usize = 16;

    fn target_mask() -> BinaryMask {
        BinaryMask::from_fn(W, H, |x, y| (4..10).contains(&x) && (4..10).contains(&y))
    }

    fn engine_with(
        det_schedule: Vec<(BinaryMask, f64, f64)>,
        trk_schedule: Vec<(BinaryMask, f64)>,
        prompt: ResolvedPrompt,
        config: EngineConfig,
    ) -> (Engine, Rc<RefCell<Vec<usize>>>, Rc<RefCell<Vec<usize>>>, Rc<RefCell<Vec<Vec<usize>>>>) {
        let det_calls = Rc::new(RefCell::new(Vec::new()));
        let trk_calls = Rc::new(RefCell::new(Vec::new()));
        let inits = Rc::new(RefCell::new(Vec::new()));
        let engine = Engine::new(
            Box::new(ScheduleDetector { schedule: det_schedule, calls: det_calls.clone() }),
            Box::new(ScheduleTracker {
                schedule: trk_schedule,
                calls: trk_calls.clone(),
                inits: inits.clone(),
            }),
            Box::new(FixedEmbedder { dim: 8 }),
            prompt,
            (W, H),
            config,
        )
        .unwrap();
        (engine, det_calls, trk_calls, inits)
    }

    fn passing_detection(n: usize) -> Vec<(BinaryMask, f64, f64)> {
        (0..n).map(|_| (target_mask(), 0.9, 0.9)).collect()
    }

    fn perfect_tracking(n: usize) -> Vec<(BinaryMask, f64)> {
        (0..n).map(|_| (target_mask(), 0.95)).collect()
    }

    #[test]
    fn select_granularity_argmax_and_ties() {
        let m = target_mask();
        let out = DetectorOutput::new((m.clone(), 0.3), (m.clone(), 0.9), (m.clone(), 0.5), 0.9);
        assert_eq!(select_granularity(&out).level, Granularity::Part);
        let out = DetectorOutput::new((m.clone(), 0.5), (m.clone(), 0.5), (m.clone(), 0.2), 0.9);
        assert_eq!(select_granularity(&out).level, Granularity::Whole);
        let out = DetectorOutput::new((m.clone(), 0.5), (m.clone(), 0.5), (m, 0.5), 0.9);
        assert_eq!(select_granularity(&out).level, Granularity::Whole);
    }

    #[test]
    fn presence_gate_conjunction_and_strictness() {
        let cfg = AstConfig::default();
        let m = target_mask();
        let hi = DetectorOutput::new((m.clone(), 0.9), (m.clone(), 0.1), (m.clone(), 0.1), 0.8);
        assert!(presence_gate(&hi, &cfg));
        let low_p = DetectorOutput::new((m.clone(), 0.9), (m.clone(), 0.1), (m.clone(), 0.1), 0.1);
        assert!(!presence_gate(&low_p, &cfg));
        // Exactly at the threshold fails the strict gate.
        let edge = DetectorOutput::new((m.clone(), 0.7), (m.clone(), 0.1), (m, 0.1), 0.8);
        assert!(!presence_gate(&edge, &cfg));
    }

    #[test]
    fn normalize_expression_strips_case_and_punctuation() {
        assert_eq!(
            normalize_expression("Segment the Bipolar-Forceps, on the LEFT!"),
            "segment the bipolar-forceps on the left"
        );
        assert_eq!(normalize_expression("  already clean  "), "already clean");
    }

    #[test]
    fn visual_prompt_tracks_from_prompt_frame() {
        let n = 8;
        let (mut engine, det_calls, trk_calls, inits) = engine_with(
            passing_detection(n),
            perfect_tracking(n),
            ResolvedPrompt::Visual { prompt_frame: 2, init_mask: target_mask() },
            EngineConfig::default(),
        );
        let run = engine.run_video(n).unwrap();
        assert_eq!(run.outputs[0].state, Stage::Detecting);
        assert!(!run.outputs[0].present);
        assert_eq!(run.outputs[2].state, Stage::Tracking);
        assert!(run.outputs[2].present);
        assert_eq!(run.outputs[2].mask, target_mask());
        // Visual route never touches the detector.
        assert!(det_calls.borrow().is_empty());
        assert_eq!(*trk_calls.borrow(), vec![3, 4, 5, 6, 7]);
        assert_eq!(*inits.borrow(), vec![vec![2]]);
        assert_eq!(run.events.len(), 1);
        assert_eq!(run.events[0].event, EventKind::Activation);
    }

    #[test]
    fn linguistic_prompt_activates_after_full_window() {
        let n = 12;
        let (mut engine, det_calls, trk_calls, _) = engine_with(
            passing_detection(n),
            perfect_tracking(n),
            ResolvedPrompt::Linguistic { expression: "target".into() },
            EngineConfig::default(),
        );
        let run = engine.run_video(n).unwrap();
        // Default window 5: frames 0..=3 detect, frame 4 activates.
        for out in &run.outputs[0..4] {
            assert_eq!(out.state, Stage::Detecting);
            assert!(out.present, "gated detections still emit masks");
        }
        assert_eq!(run.outputs[4].state, Stage::Tracking);
        assert_eq!(*trk_calls.borrow(), (5..12).collect::<Vec<_>>());
        // Detector ran on frames 0..=4 plus the consensus check at tracked
        // frame 5 (video frame 9).
        assert_eq!(*det_calls.borrow(), vec![0, 1, 2, 3, 4, 9]);
        let kinds: Vec<EventKind> = run.events.iter().map(|e| e.event).collect();
        assert_eq!(kinds, vec![EventKind::Activation, EventKind::Check]);
    }

    #[test]
    fn closed_gate_keeps_outputs_empty() {
        let n = 10;
        let schedule: Vec<(BinaryMask, f64, f64)> =
            (0..n).map(|_| (target_mask(), 0.9, 0.0)).collect();
        let (mut engine, _, trk_calls, _) = engine_with(
            schedule,
            perfect_tracking(n),
            ResolvedPrompt::Linguistic { expression: "target".into() },
            EngineConfig::default(),
        );
        let run = engine.run_video(n).unwrap();
        for out in &run.outputs {
            assert_eq!(out.state, Stage::Detecting);
            assert!(!out.present);
            assert!(out.mask.is_empty());
        }
        assert!(trk_calls.borrow().is_empty());
        assert!(run.masklet.is_empty());
    }

    #[test]
    fn fallback_reverts_to_detector_output_and_resets_memory() {
        let n = 40;
        // Tracker emits a mask disjoint from the detector reference.
        let wrong = BinaryMask::from_fn(W, H, |x, y| x < 3 && y < 3);
        let trk: Vec<(BinaryMask, f64)> = (0..n).map(|_| (wrong.clone(), 0.95)).collect();
        let (mut engine, _, _, _) = engine_with(
            passing_detection(n),
            trk,
            ResolvedPrompt::Linguistic { expression: "target".into() },
            EngineConfig::default(),
        );
        let mut outputs = Vec::new();
        let mut fallback_frame = None;
        for frame in 0..n {
            let out = engine.step(frame).unwrap();
            if out.events.iter().any(|e| e.event == EventKind::Fallback) && fallback_frame.is_none()
            {
                fallback_frame = Some(frame);
                assert!(!engine.memory().is_active(), "fallback resets tracking memory");
            }
            outputs.push(out);
        }
        // Checks at frames 9, 14, 19, 24, 29 fill the queue with -1 votes.
        let fallback_frame = fallback_frame.expect("fallback must fire");
        assert_eq!(fallback_frame, 29);
        let out = &outputs[fallback_frame];
        assert_eq!(out.state, Stage::Detecting);
        assert_eq!(out.mask, target_mask(), "fallback frame reports the detector result");
        // The system re-enters detection and activates again.
        assert!(outputs[fallback_frame + 1..].iter().any(|o| o.state == Stage::Tracking));
    }

    #[test]
    fn exit_gate_off_never_falls_back() {
        let n = 40;
        let wrong = BinaryMask::from_fn(W, H, |x, y| x < 3 && y < 3);
        let trk: Vec<(BinaryMask, f64)> = (0..n).map(|_| (wrong.clone(), 0.95)).collect();
        let (mut engine, det_calls, _, _) = engine_with(
            passing_detection(n),
            trk,
            ResolvedPrompt::Linguistic { expression: "target".into() },
            EngineConfig { exit_gate: false, ..EngineConfig::default() },
        );
        let run = engine.run_video(n).unwrap();
        assert!(run.events.iter().all(|e| e.event != EventKind::Fallback));
        assert!(run.events.iter().all(|e| e.event != EventKind::Check));
        // Detector only ran during the entry window.
        assert_eq!(*det_calls.borrow(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn swapping_tracker_never_changes_detecting_outputs() {
        let n = 4; // stays below the activation window
        let make = |trk: Vec<(BinaryMask, f64)>| {
            let (mut engine, _, _, _) = engine_with(
                passing_detection(n),
                trk,
                ResolvedPrompt::Linguistic { expression: "target".into() },
                EngineConfig::default(),
            );
            engine.run_video(n).unwrap()
        };
        let a = make(perfect_tracking(n));
        let b = make((0..n).map(|_| (BinaryMask::new(W, H), 0.0)).collect());
        for (x, y) in a.outputs.iter().zip(&b.outputs) {
            assert_eq!(x.mask, y.mask);
            assert_eq!(x.present, y.present);
            assert_eq!(x.state, y.state);
        }
    }

    #[test]
    fn swapping_detector_never_changes_tracking_between_checks() {
        let n = 9; // activation at 4, first check at tracked frame 5 (frame 9)
        let make = |det: Vec<(BinaryMask, f64, f64)>| {
            let (mut engine, _, _, _) = engine_with(
                det,
                perfect_tracking(n),
                ResolvedPrompt::Linguistic { expression: "target".into() },
                EngineConfig::default(),
            );
            engine.run_video(n).unwrap()
        };
        let a = make(passing_detection(n));
        let mut alt = passing_detection(n);
        // Same gate decisions, different detector masks after activation.
        for entry in alt.iter_mut().skip(5) {
            entry.0 = BinaryMask::filled(W, H);
        }
        let b = make(alt);
        for frame in 5..9 {
            assert_eq!(a.outputs[frame].mask, b.outputs[frame].mask);
        }
    }

    #[test]
    fn absent_verdict_always_means_empty_mask() {
        let n = 30;
        let mut schedule = passing_detection(n);
        for (i, entry) in schedule.iter_mut().enumerate() {
            if i % 3 == 0 {
                entry.2 = 0.1; // fails presence
            }
        }
        let (mut engine, _, _, _) = engine_with(
            schedule,
            perfect_tracking(n),
            ResolvedPrompt::Linguistic { expression: "target".into() },
            EngineConfig::default(),
        );
        let run = engine.run_video(n).unwrap();
        for out in &run.outputs {
            if !out.present {
                assert!(out.mask.is_empty());
            }
        }
    }

    #[test]
    fn empty_video_is_an_error() {
        let (mut engine, _, _, _) = engine_with(
            passing_detection(1),
            perfect_tracking(1),
            ResolvedPrompt::Linguistic { expression: "target".into() },
            EngineConfig::default(),
        );
        assert!(matches!(engine.run_video(0), Err(PipelineError::EmptyVideo)));
    }

    #[test]
    fn prompt_validation() {
        assert!(Prompt::Text("  ".into()).validate((8, 8)).is_err());
        assert!(Prompt::Points(vec![]).validate((8, 8)).is_err());
        assert!(Prompt::Points(vec![PointPrompt { x: 9, y: 0, positive: true }])
            .validate((8, 8))
            .is_err());
        assert!(Prompt::Box { x0: 2, y0: 2, x1: 2, y1: 5 }.validate((8, 8)).is_err());
        assert!(Prompt::Box { x0: 0, y0: 0, x1: 8, y1: 8 }.validate((8, 8)).is_ok());
        assert!(Prompt::Mask(BinaryMask::new(4, 4)).validate((8, 8)).is_err());
    }
}
