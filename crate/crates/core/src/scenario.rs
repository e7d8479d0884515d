//! Deterministic synthetic scenes and scripted oracle contracts.
//!
//! Scenes rasterize configured shapes along piecewise-linear trajectories
//! and attach per-frame embeddings drawn from pose-bucket cluster vectors.
//! The scripted detector and drifting tracker reproduce the failure modes
//! the engine must survive (hallucinated detections on absent targets,
//! missed detections, gradual mask drift) without any learned component,
//! so every behaviour is reproducible from a seed.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feature::{Embedder, FeatureVec};
use crate::mask::{erode, BinaryMask, StructuringElement};
use crate::masklet::Masklet;
use crate::pipeline::{Detector, DetectorOutput, Granularity, Tracker, TrackerOutput};
use crate::memory::MemoryEntry;
use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scene config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Rectangle { width: usize, height: usize },
    Disc { radius: usize },
}

/// Object centre position at a given frame; positions between waypoints are
/// linearly interpolated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub frame: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: String,
    pub shape: Shape,
    pub trajectory: Vec<Waypoint>,
    /// Half-open frame ranges in which the object is in view. Empty means
    /// visible for the whole video.
    #[serde(default)]
    pub visible_intervals: Vec<(usize, usize)>,
    pub side: Side,
}

impl ObjectSpec {
    fn visible_at(&self, frame: usize) -> bool {
        if self.visible_intervals.is_empty() {
            return true;
        }
        self.visible_intervals.iter().any(|(a, b)| (*a..*b).contains(&frame))
    }

    fn center_at(&self, frame: usize) -> (f64, f64) {
        let wps = &self.trajectory;
        if frame <= wps[0].frame {
            return (wps[0].x, wps[0].y);
        }
        for pair in wps.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if frame <= b.frame {
                let span = (b.frame - a.frame) as f64;
                let t = if span == 0.0 { 0.0 } else { (frame - a.frame) as f64 / span };
                return (a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
            }
        }
        let last = wps[wps.len() - 1];
        (last.x, last.y)
    }

    /// Index of the trajectory segment the frame falls in; this is the pose
    /// bucket features are keyed by.
    fn pose_bucket(&self, frame: usize) -> usize {
        let wps = &self.trajectory;
        for (i, pair) in wps.windows(2).enumerate() {
            if frame < pair[1].frame {
                return i;
            }
        }
        wps.len().saturating_sub(2).max(0)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneConfig {
    pub seed: u64,
    /// (width, height) in pixels.
    pub frame_size: (usize, usize),
    pub num_frames: usize,
    pub objects: Vec<ObjectSpec>,
    /// Embedding dimension for generated frame features.
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    /// Pose bucket -> unit direction. Buckets without an entry fall back to
    /// an axis vector chosen by bucket index.
    #[serde(default)]
    pub feature_clusters: BTreeMap<String, Vec<f32>>,
}

fn default_feature_dim() -> usize {
    16
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let (w, h) = self.frame_size;
        if w == 0 || h == 0 {
            return Err(ScenarioError::InvalidConfig("frame size must be positive".into()));
        }
        if self.num_frames == 0 {
            return Err(ScenarioError::InvalidConfig("num_frames must be positive".into()));
        }
        if self.objects.is_empty() {
            return Err(ScenarioError::InvalidConfig("scene needs at least one object".into()));
        }
        if self.feature_dim == 0 {
            return Err(ScenarioError::InvalidConfig("feature_dim must be positive".into()));
        }
        let mut ids = std::collections::HashSet::new();
        for obj in &self.objects {
            if !ids.insert(obj.id.as_str()) {
                return Err(ScenarioError::InvalidConfig(format!("duplicate object id {}", obj.id)));
            }
            if obj.trajectory.is_empty() {
                return Err(ScenarioError::InvalidConfig(format!("object {} has no waypoints", obj.id)));
            }
            if obj.trajectory.windows(2).any(|p| p[1].frame <= p[0].frame) {
                return Err(ScenarioError::InvalidConfig(format!(
                    "object {} waypoints must be strictly increasing in frame",
                    obj.id
                )));
            }
            match obj.shape {
                Shape::Rectangle { width, height } if width == 0 || height == 0 => {
                    return Err(ScenarioError::InvalidConfig(format!("object {} has a zero-size shape", obj.id)));
                }
                Shape::Disc { radius } if radius == 0 => {
                    return Err(ScenarioError::InvalidConfig(format!("object {} has a zero-size shape", obj.id)));
                }
                _ => {}
            }
            for (a, b) in &obj.visible_intervals {
                if a >= b || *b > self.num_frames {
                    return Err(ScenarioError::InvalidConfig(format!(
                        "object {} visible interval [{a}, {b}) outside video of {} frames",
                        obj.id, self.num_frames
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A fully generated scene: ground-truth masklets and per-frame embeddings,
/// all a pure function of the config.
#[derive(Clone, Debug)]
pub struct Scene {
    pub config: SceneConfig,
    pub gt: BTreeMap<String, Masklet>,
    pub features: Vec<FeatureVec>,
}

impl Scene {
    pub fn frame_size(&self) -> (usize, usize) {
        self.config.frame_size
    }

    pub fn num_frames(&self) -> usize {
        self.config.num_frames
    }

    pub fn gt_mask(&self, object_id: &str, frame: usize) -> Option<&BinaryMask> {
        self.gt.get(object_id).and_then(|m| m.get(frame))
    }

    fn empty_mask(&self) -> BinaryMask {
        BinaryMask::new(self.config.frame_size.0, self.config.frame_size.1)
    }
}

fn rasterize(shape: Shape, center: (f64, f64), frame_size: (usize, usize)) -> BinaryMask {
    let (w, h) = frame_size;
    let mut mask = BinaryMask::new(w, h);
    match shape {
        Shape::Rectangle { width, height } => {
            let x0 = (center.0 - width as f64 / 2.0).round() as i64;
            let y0 = (center.1 - height as f64 / 2.0).round() as i64;
            for y in y0.max(0)..(y0 + height as i64).min(h as i64) {
                for x in x0.max(0)..(x0 + width as i64).min(w as i64) {
                    mask.set(x as usize, y as usize, true);
                }
            }
        }
        Shape::Disc { radius } => {
            let r = radius as f64;
            let x0 = ((center.0 - r).floor() as i64).max(0);
            let x1 = ((center.0 + r).ceil() as i64 + 1).min(w as i64);
            let y0 = ((center.1 - r).floor() as i64).max(0);
            let y1 = ((center.1 + r).ceil() as i64 + 1).min(h as i64);
            for y in y0..y1 {
                for x in x0..x1 {
                    let dx = x as f64 - center.0;
                    let dy = y as f64 - center.1;
                    if dx * dx + dy * dy <= r * r {
                        mask.set(x as usize, y as usize, true);
                    }
                }
            }
        }
    }
    mask
}

fn cluster_direction(config: &SceneConfig, bucket: usize) -> Vec<f32> {
    if let Some(v) = config.feature_clusters.get(&bucket.to_string()) {
        return v.clone();
    }
    let mut v = vec![0.0f32; config.feature_dim];
    v[bucket % config.feature_dim] = 1.0;
    v
}

/// Generate masklets and features for a scene. Bit-identical for the same
/// config on every platform.
pub fn generate_scene(config: &SceneConfig) -> Result<Scene, ScenarioError> {
    config.validate()?;
    let mut gt = BTreeMap::new();
    for obj in &config.objects {
        let mut masklet = Masklet::new();
        for frame in 0..config.num_frames {
            if obj.visible_at(frame) {
                let mask = rasterize(obj.shape, obj.center_at(frame), config.frame_size);
                masklet.insert(frame, mask);
            }
        }
        gt.insert(obj.id.clone(), masklet);
    }

    let anchor = &config.objects[0];
    let mut features = Vec::with_capacity(config.num_frames);
    for frame in 0..config.num_frames {
        let mut values = cluster_direction(config, anchor.pose_bucket(frame));
        // Unit direction plus a seeded perturbation of magnitude <= 0.05.
        let norm = values.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut values {
                *v = (*v as f64 / norm) as f32;
            }
        }
        let mut rng = SplitMix64::new(
            config.seed ^ (frame as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        let raw: Vec<f64> = (0..values.len()).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        let raw_norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if raw_norm > 0.0 {
            let scale = 0.05 * rng.next_f64() / raw_norm;
            for (v, r) in values.iter_mut().zip(&raw) {
                *v = (*v as f64 + scale * r) as f32;
            }
        }
        features.push(FeatureVec::new(values).expect("generated feature is valid"));
    }

    Ok(Scene { config: config.clone(), gt, features })
}

/// Embedder backed by the scene's precomputed per-frame features.
#[derive(Clone)]
pub struct SceneEmbedder {
    scene: Arc<Scene>,
}

impl SceneEmbedder {
    pub fn new(scene: Arc<Scene>) -> Self {
        SceneEmbedder { scene }
    }
}

impl Embedder for SceneEmbedder {
    fn embed(&self, frame_index: usize) -> FeatureVec {
        let idx = frame_index.min(self.scene.features.len() - 1);
        self.scene.features[idx].clone()
    }
}

/// Resolve a normalized expression against the scene: an object matches when
/// all of its id tokens appear in the expression and any side word agrees
/// with the object's side tag. Returns the first match in scene order.
pub fn resolve_expression(scene: &Scene, expression: &str) -> Option<usize> {
    let expr = crate::pipeline::normalize_expression(expression);
    let tokens: Vec<&str> = expr.split_whitespace().collect();
    let side_query = tokens.iter().find_map(|t| match *t {
        "left" => Some(Side::Left),
        "right" => Some(Side::Right),
        _ => None,
    });
    scene.config.objects.iter().position(|obj| {
        let id_norm = crate::pipeline::normalize_expression(&obj.id);
        let id_tokens: Vec<&str> = id_norm.split([' ', '-']).filter(|t| !t.is_empty()).collect();
        let expr_has_all = id_tokens.iter().all(|needle| {
            tokens.iter().any(|t| t == needle || t.split('-').any(|piece| piece == *needle))
        });
        let side_ok = side_query.map_or(true, |s| s == obj.side);
        expr_has_all && side_ok
    })
}

/// Granularity requested by the expression ("part", "subpart"/"tip").
fn requested_granularity(expression: &str) -> Granularity {
    let expr = crate::pipeline::normalize_expression(expression);
    let mut level = Granularity::Whole;
    for token in expr.split_whitespace() {
        match token {
            "subpart" | "tip" => return Granularity::Subpart,
            "part" => level = Granularity::Part,
            _ => {}
        }
    }
    level
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScriptedDetectorConfig {
    /// Canonical query this scenario is built around; fixture prompts are
    /// generated from it. Resolution at run time uses the incoming
    /// expression, so negative queries behave as real misses.
    pub target_id: String,
    /// Amplitude of the per-frame quality-score noise.
    #[serde(default)]
    pub iou_noise: f64,
    /// Amplitude of the per-frame presence-score noise.
    #[serde(default)]
    pub presence_noise: f64,
    /// Frame ranges where an absent target is hallucinated: a plausible
    /// wrong-object mask with scores >= 0.9.
    #[serde(default)]
    pub hallucination_schedule: Vec<(usize, usize)>,
    /// Frame ranges where detection of a visible target is suppressed.
    #[serde(default)]
    pub miss_schedule: Vec<(usize, usize)>,
}

fn in_schedule(schedule: &[(usize, usize)], frame: usize) -> bool {
    schedule.iter().any(|(a, b)| (*a..*b).contains(&frame))
}

/// Per-frame noise in [0, 1), a pure function of (seed, frame, salt).
fn frame_noise(seed: u64, frame: usize, salt: u64) -> f64 {
    SplitMix64::new(seed ^ (frame as u64).wrapping_mul(0xA076_1D64_78BD_642F) ^ salt).next_f64()
}

pub struct ScriptedDetector {
    scene: Arc<Scene>,
    config: ScriptedDetectorConfig,
}

impl ScriptedDetector {
    pub fn new(scene: Arc<Scene>, config: ScriptedDetectorConfig) -> Self {
        ScriptedDetector { scene, config }
    }

    /// The wrong object a hallucination latches onto: the first visible
    /// object other than the target, else a centred quarter-frame block.
    fn hallucinated_mask(&self, frame: usize, target: Option<usize>) -> BinaryMask {
        for (i, obj) in self.scene.config.objects.iter().enumerate() {
            if Some(i) == target {
                continue;
            }
            if let Some(mask) = self.scene.gt_mask(&obj.id, frame) {
                return mask.clone();
            }
        }
        let (w, h) = self.scene.frame_size();
        BinaryMask::from_fn(w, h, |x, y| {
            x >= w / 2 - w / 8 && x < w / 2 + w / 8 && y >= h / 2 - h / 8 && y < h / 2 + h / 8
        })
    }
}

impl Detector for ScriptedDetector {
    fn detect(&self, frame_index: usize, expression: &str) -> DetectorOutput {
        let seed = self.scene.config.seed;
        let u_iou = frame_noise(seed, frame_index, 0x01);
        let u_p = frame_noise(seed, frame_index, 0x02);

        let target = resolve_expression(&self.scene, expression);
        let visible_mask = target.and_then(|idx| {
            let id = &self.scene.config.objects[idx].id;
            self.scene.gt_mask(id, frame_index)
        });

        let detected = visible_mask.filter(|_| !in_schedule(&self.config.miss_schedule, frame_index));

        if let Some(gt) = detected {
            let whole = gt.clone();
            let part = erode(&whole, StructuringElement::Cross3);
            let subpart = erode(&part, StructuringElement::Cross3);
            let top = (1.0 - self.config.iou_noise * u_iou).clamp(0.0, 1.0);
            let (s_whole, s_part, s_sub) = match requested_granularity(expression) {
                Granularity::Whole => (top, top * 0.7, top * 0.4),
                Granularity::Part => (top * 0.7, top, top * 0.4),
                Granularity::Subpart => (top * 0.7, top * 0.4, top),
            };
            let s_p = (1.0 - self.config.presence_noise * u_p).clamp(0.0, 1.0);
            return DetectorOutput::new((whole, s_whole), (part, s_part), (subpart, s_sub), s_p);
        }

        if in_schedule(&self.config.hallucination_schedule, frame_index) {
            let wrong = self.hallucinated_mask(frame_index, target);
            let part = erode(&wrong, StructuringElement::Cross3);
            let subpart = erode(&part, StructuringElement::Cross3);
            let s = (1.0 - self.config.iou_noise * u_iou).clamp(0.9, 1.0);
            let s_p = (1.0 - self.config.presence_noise * u_p).clamp(0.9, 1.0);
            return DetectorOutput::new((wrong, s), (part, s * 0.7), (subpart, s * 0.4), s_p);
        }

        // Absent target: empty candidates, low scores.
        let empty = self.scene.empty_mask();
        let s = self.config.iou_noise * u_iou;
        let s_p = self.config.presence_noise * u_p;
        DetectorOutput::new((empty.clone(), s), (empty.clone(), s * 0.7), (empty, s * 0.4), s_p)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DriftingTrackerConfig {
    /// Tracked frames after (re)initialization before drift sets in. A value
    /// past the video length gives a perfect tracker; re-initialization
    /// resets the countdown, which is what makes fallback recovery work.
    pub drift_onset: usize,
    /// Pixels of drift accumulated per post-onset frame.
    #[serde(default)]
    pub drift_velocity: (f64, f64),
    /// Multiplicative decay applied to the reported quality score per
    /// post-onset frame.
    #[serde(default = "default_score_decay")]
    pub score_decay: f64,
}

fn default_score_decay() -> f64 {
    1.0
}

impl DriftingTrackerConfig {
    /// Tracker that never drifts.
    pub fn perfect() -> Self {
        DriftingTrackerConfig {
            drift_onset: usize::MAX / 2,
            drift_velocity: (0.0, 0.0),
            score_decay: 1.0,
        }
    }
}

/// Oracle tracker: emits the ground truth of whichever object the init
/// masks overlap best, translated by the accumulated drift offset once the
/// onset passes.
pub struct DriftingTracker {
    scene: Arc<Scene>,
    config: DriftingTrackerConfig,
    target: Option<usize>,
    tracked_since_init: usize,
    reported_score: f64,
}

impl DriftingTracker {
    pub fn new(scene: Arc<Scene>, config: DriftingTrackerConfig) -> Self {
        DriftingTracker { scene, config, target: None, tracked_since_init: 0, reported_score: 1.0 }
    }
}

impl Tracker for DriftingTracker {
    fn init(&mut self, frames: &[(usize, BinaryMask)]) {
        self.tracked_since_init = 0;
        self.reported_score = 1.0;
        self.target = None;
        // Lock onto the object that best overlaps the latest init mask.
        let Some((frame, mask)) = frames.last() else { return };
        let mut best = 0.0;
        for (i, obj) in self.scene.config.objects.iter().enumerate() {
            if let Some(gt) = self.scene.gt_mask(&obj.id, *frame) {
                if let Ok(overlap) = crate::mask::iou(mask, gt) {
                    if overlap > best {
                        best = overlap;
                        self.target = Some(i);
                    }
                }
            }
        }
    }

    fn track(&mut self, frame_index: usize, _context: &[&MemoryEntry]) -> TrackerOutput {
        let empty = self.scene.empty_mask();
        let Some(target) = self.target else {
            return TrackerOutput { mask: empty, s_iou: 0.0, s_p: 0.0 };
        };
        self.tracked_since_init += 1;
        let drifted = self.tracked_since_init.saturating_sub(self.config.drift_onset);
        if drifted > 0 {
            self.reported_score *= self.config.score_decay;
        }
        let id = &self.scene.config.objects[target].id;
        let mask = match self.scene.gt_mask(id, frame_index) {
            Some(gt) if drifted > 0 => {
                let dx = (drifted as f64 * self.config.drift_velocity.0).round() as i64;
                let dy = (drifted as f64 * self.config.drift_velocity.1).round() as i64;
                gt.translate(dx, dy)
            }
            Some(gt) => gt.clone(),
            None => empty,
        };
        let present = !mask.is_empty();
        TrackerOutput {
            mask,
            s_iou: if present { self.reported_score } else { 0.0 },
            s_p: if present { 1.0 } else { 0.0 },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::iou;

    fn simple_scene() -> SceneConfig {
        SceneConfig {
            seed: 42,
            frame_size: (64, 48),
            num_frames: 20,
            objects: vec![ObjectSpec {
                id: "probe".into(),
                shape: Shape::Rectangle { width: 10, height: 6 },
                trajectory: vec![
                    Waypoint { frame: 0, x: 20.0, y: 20.0 },
                    Waypoint { frame: 19, x: 40.0, y: 20.0 },
                ],
                visible_intervals: vec![(5, 10)],
                side: Side::Right,
            }],
            feature_dim: 8,
            feature_clusters: BTreeMap::new(),
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = simple_scene();
        let a = generate_scene(&cfg).unwrap();
        let b = generate_scene(&cfg).unwrap();
        assert_eq!(a.gt, b.gt);
        for (fa, fb) in a.features.iter().zip(&b.features) {
            assert_eq!(fa.values(), fb.values());
        }
    }

    #[test]
    fn rectangle_area_is_exact_when_inside_frame() {
        let cfg = simple_scene();
        let scene = generate_scene(&cfg).unwrap();
        for frame in 5..10 {
            let mask = scene.gt_mask("probe", frame).expect("visible");
            assert_eq!(mask.count_ones(), 60, "frame {frame}");
        }
    }

    #[test]
    fn masklet_respects_visible_intervals() {
        let scene = generate_scene(&simple_scene()).unwrap();
        let masklet = &scene.gt["probe"];
        for frame in 0..20 {
            assert_eq!(masklet.is_present(frame), (5..10).contains(&frame));
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = simple_scene();
        cfg.objects[0].visible_intervals = vec![(5, 25)];
        assert!(generate_scene(&cfg).is_err());
        let mut cfg = simple_scene();
        cfg.objects[0].trajectory.clear();
        assert!(generate_scene(&cfg).is_err());
        let mut cfg = simple_scene();
        cfg.objects[0].shape = Shape::Disc { radius: 0 };
        assert!(generate_scene(&cfg).is_err());
    }

    #[test]
    fn features_stay_near_unit_length() {
        let scene = generate_scene(&simple_scene()).unwrap();
        for f in &scene.features {
            let norm = f.values().iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() <= 0.051, "norm {norm}");
        }
    }

    fn two_object_scene() -> SceneConfig {
        SceneConfig {
            seed: 7,
            frame_size: (80, 40),
            num_frames: 30,
            objects: vec![
                ObjectSpec {
                    id: "needle-driver".into(),
                    shape: Shape::Rectangle { width: 8, height: 8 },
                    trajectory: vec![Waypoint { frame: 0, x: 60.0, y: 20.0 }],
                    visible_intervals: vec![(0, 15)],
                    side: Side::Right,
                },
                ObjectSpec {
                    id: "grasper".into(),
                    shape: Shape::Disc { radius: 5 },
                    trajectory: vec![Waypoint { frame: 0, x: 20.0, y: 20.0 }],
                    visible_intervals: vec![],
                    side: Side::Left,
                },
            ],
            feature_dim: 8,
            feature_clusters: BTreeMap::new(),
        }
    }

    #[test]
    fn expression_resolution_and_side_negatives() {
        let scene = generate_scene(&two_object_scene()).unwrap();
        assert_eq!(resolve_expression(&scene, "the needle driver on the right"), Some(0));
        assert_eq!(resolve_expression(&scene, "grasper"), Some(1));
        // Spatial hard negative: right-side instrument queried as left.
        assert_eq!(resolve_expression(&scene, "needle driver on the left"), None);
        // Category-level negative: id not in the scene.
        assert_eq!(resolve_expression(&scene, "scissors"), None);
    }

    #[test]
    fn detector_emits_gt_when_visible_and_low_scores_when_absent() {
        let scene = Arc::new(generate_scene(&two_object_scene()).unwrap());
        let det = ScriptedDetector::new(
            scene.clone(),
            ScriptedDetectorConfig {
                target_id: "needle-driver".into(),
                iou_noise: 0.05,
                presence_noise: 0.05,
                hallucination_schedule: vec![],
                miss_schedule: vec![],
            },
        );
        let out = det.detect(3, "needle driver right");
        let best = crate::pipeline::select_granularity(&out);
        assert_eq!(best.level, Granularity::Whole);
        assert_eq!(&best.mask, scene.gt_mask("needle-driver", 3).unwrap());
        assert!(out.s_p > 0.9);
        // After the target leaves the view.
        let out = det.detect(20, "needle driver right");
        assert!(out.s_p <= 0.05);
        assert!(crate::pipeline::select_granularity(&out).mask.is_empty());
        // Category-level negative stays low on every frame.
        for frame in 0..30 {
            let out = det.detect(frame, "scissors");
            assert!(out.s_p <= 0.05, "frame {frame}");
        }
    }

    #[test]
    fn hallucination_window_emits_wrong_object_with_high_scores() {
        let scene = Arc::new(generate_scene(&two_object_scene()).unwrap());
        let det = ScriptedDetector::new(
            scene.clone(),
            ScriptedDetectorConfig {
                target_id: "needle-driver".into(),
                iou_noise: 0.05,
                presence_noise: 0.05,
                hallucination_schedule: vec![(18, 22)],
                miss_schedule: vec![],
            },
        );
        let out = det.detect(19, "needle driver right");
        assert!(out.s_p >= 0.9);
        let best = crate::pipeline::select_granularity(&out);
        assert!(best.s_iou >= 0.9);
        // The hallucinated mask is the visible distractor, not the target.
        assert_eq!(&best.mask, scene.gt_mask("grasper", 19).unwrap());
    }

    #[test]
    fn miss_schedule_suppresses_detection() {
        let scene = Arc::new(generate_scene(&two_object_scene()).unwrap());
        let det = ScriptedDetector::new(
            scene,
            ScriptedDetectorConfig {
                target_id: "grasper".into(),
                iou_noise: 0.0,
                presence_noise: 0.0,
                hallucination_schedule: vec![],
                miss_schedule: vec![(10, 12)],
            },
        );
        assert!(det.detect(9, "grasper").s_p > 0.99);
        assert_eq!(det.detect(10, "grasper").s_p, 0.0);
        assert!(det.detect(12, "grasper").s_p > 0.99);
    }

    #[test]
    fn part_queries_select_eroded_candidates() {
        let scene = Arc::new(generate_scene(&two_object_scene()).unwrap());
        let det = ScriptedDetector::new(
            scene.clone(),
            ScriptedDetectorConfig {
                target_id: "grasper".into(),
                iou_noise: 0.0,
                presence_noise: 0.0,
                hallucination_schedule: vec![],
                miss_schedule: vec![],
            },
        );
        let whole = scene.gt_mask("grasper", 0).unwrap();
        let best_part = crate::pipeline::select_granularity(&det.detect(0, "part of the grasper"))
            .clone();
        assert_eq!(best_part.level, Granularity::Part);
        assert_eq!(best_part.mask, erode(whole, StructuringElement::Cross3));
        let best_tip =
            crate::pipeline::select_granularity(&det.detect(0, "tip of the grasper")).clone();
        assert_eq!(best_tip.level, Granularity::Subpart);
    }

    fn drift_scene() -> Scene {
        generate_scene(&SceneConfig {
            seed: 1,
            frame_size: (60, 30),
            num_frames: 40,
            objects: vec![ObjectSpec {
                id: "tool".into(),
                shape: Shape::Rectangle { width: 10, height: 10 },
                trajectory: vec![Waypoint { frame: 0, x: 15.0, y: 15.0 }],
                visible_intervals: vec![],
                side: Side::Left,
            }],
            feature_dim: 4,
            feature_clusters: BTreeMap::new(),
        })
        .unwrap()
    }

    #[test]
    fn drifting_tracker_matches_rectangle_overlap_arithmetic() {
        let scene = Arc::new(drift_scene());
        let gt0 = scene.gt_mask("tool", 0).unwrap().clone();
        let mut tracker = DriftingTracker::new(
            scene.clone(),
            DriftingTrackerConfig {
                drift_onset: 3,
                drift_velocity: (1.0, 0.0),
                score_decay: 0.9,
            },
        );
        tracker.init(&[(0, gt0)]);
        let mut at = |frame: usize| {
            let out = tracker.track(frame, &[]);
            iou(&out.mask, scene.gt_mask("tool", frame).unwrap()).unwrap()
        };
        // Tracked frames 1..=3: before/at onset, exact.
        assert_eq!(at(1), 1.0);
        assert_eq!(at(2), 1.0);
        assert_eq!(at(3), 1.0);
        for _ in 4..8 {
            at(0); // advance to onset+4 (absolute frame irrelevant for drift)
        }
        // Tracked frame onset+5: offset 5 on a 10 px square -> IoU 1/3.
        let v = at(8);
        assert!((v - 1.0 / 3.0).abs() < 1e-12, "got {v}");
        // Tracked frame onset+10: disjoint.
        let mut tracker2 = DriftingTracker::new(
            scene.clone(),
            DriftingTrackerConfig { drift_onset: 3, drift_velocity: (1.0, 0.0), score_decay: 0.9 },
        );
        tracker2.init(&[(0, scene.gt_mask("tool", 0).unwrap().clone())]);
        let mut last = 1.0;
        for _ in 1..=13 {
            let out = tracker2.track(5, &[]);
            last = iou(&out.mask, scene.gt_mask("tool", 5).unwrap()).unwrap();
        }
        assert_eq!(last, 0.0);
    }

    #[test]
    fn onset_past_video_end_tracks_perfectly() {
        let scene = Arc::new(drift_scene());
        let mut tracker = DriftingTracker::new(scene.clone(), DriftingTrackerConfig::perfect());
        tracker.init(&[(0, scene.gt_mask("tool", 0).unwrap().clone())]);
        for frame in 1..scene.num_frames() {
            let out = tracker.track(frame, &[]);
            assert_eq!(&out.mask, scene.gt_mask("tool", frame).unwrap());
            assert_eq!(out.s_iou, 1.0);
        }
    }

    #[test]
    fn reinit_resets_drift_accumulator() {
        let scene = Arc::new(drift_scene());
        let mut tracker = DriftingTracker::new(
            scene.clone(),
            DriftingTrackerConfig { drift_onset: 2, drift_velocity: (3.0, 0.0), score_decay: 1.0 },
        );
        tracker.init(&[(0, scene.gt_mask("tool", 0).unwrap().clone())]);
        for frame in 1..=8 {
            tracker.track(frame, &[]);
        }
        let drifted = tracker.track(9, &[]);
        assert!(iou(&drifted.mask, scene.gt_mask("tool", 9).unwrap()).unwrap() < 0.5);
        // Fresh init: tracking is clean again.
        tracker.init(&[(10, scene.gt_mask("tool", 10).unwrap().clone())]);
        let out = tracker.track(11, &[]);
        assert_eq!(&out.mask, scene.gt_mask("tool", 11).unwrap());
    }
}
