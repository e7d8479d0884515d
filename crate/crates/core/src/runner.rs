//! Manifest-driven runs: reconstruct each video's scene and scripted
//! oracles, resolve prompts, run one engine per (masklet, prompt) task, and
//! assemble a predictions manifest plus per-task event logs. Tasks are
//! independent and run through the parallel map; results merge in manifest
//! order, so outputs are byte-identical at any parallelism degree.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    rle_encode, rle_decode, AnnotationGranularity, DatasetError, Manifest, MaskletRecord,
    PromptPayload, PromptPoint, PromptRecord, ScenarioBinding, VideoRecord,
};
use crate::mask::BinaryMask;
use crate::memory::MemorySnapshotRecord;
use crate::pipeline::{
    normalize_expression, Engine, EngineConfig, PipelineError, ResolvedPrompt, TransitionEvent,
};
use crate::par;
use crate::scenario::{
    generate_scene, DriftingTracker, Scene, SceneEmbedder, ScenarioError, ScriptedDetector,
};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("video {0} carries no scenario binding; oracles cannot be built")]
    NoScenario(String),
    #[error("prompt for masklet {masklet}: {reason}")]
    UnresolvablePrompt { masklet: String, reason: String },
    #[error("scenario prompt references unknown object {0}")]
    UnknownObject(String),
    #[error("object {0} is never visible; cannot place a visual prompt")]
    NeverVisible(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Prompt request inside a scenario file; the generator fills in payloads
/// from the ground truth (points, boxes, and masks come from the target's
/// first appearance).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioPrompt {
    pub object: String,
    pub modality: String,
    /// Expression for text/audio prompts; defaults to the object id.
    #[serde(default)]
    pub expression: Option<String>,
    /// Source tag for audio transcripts.
    #[serde(default)]
    pub source: Option<String>,
}

/// On-disk input of `gen-scenario`: a scene, its scripted oracles, and the
/// prompts the emitted manifest should carry.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioFileConfig {
    pub dataset: String,
    pub video_id: String,
    #[serde(default = "default_fps")]
    pub fps: f64,
    pub scene: crate::scenario::SceneConfig,
    pub detector: crate::scenario::ScriptedDetectorConfig,
    pub tracker: crate::scenario::DriftingTrackerConfig,
    pub prompts: Vec<ScenarioPrompt>,
}

fn default_fps() -> f64 {
    25.0
}

/// Three deterministic interior points of a mask: the set pixels at the
/// quartile positions of the row-major scan.
fn three_points(mask: &BinaryMask) -> Vec<PromptPoint> {
    let (w, h) = mask.dims();
    let mut set = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                set.push((x, y));
            }
        }
    }
    [set.len() / 4, set.len() / 2, 3 * set.len() / 4]
        .iter()
        .map(|&i| {
            let (x, y) = set[i.min(set.len() - 1)];
            PromptPoint { x, y, positive: true }
        })
        .collect()
}

fn bounding_box(mask: &BinaryMask) -> (usize, usize, usize, usize) {
    let (w, h) = mask.dims();
    let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
        }
    }
    (x0, y0, x1, y1)
}

/// Generate the dataset manifest for a scenario: ground-truth masklets, the
/// requested prompt suite, and the oracle bindings that make downstream
/// runs hermetic. `seed` overrides the scene seed when given.
pub fn scenario_to_manifest(
    spec: &ScenarioFileConfig,
    seed: Option<u64>,
) -> Result<Manifest, RunnerError> {
    let mut scene_config = spec.scene.clone();
    if let Some(seed) = seed {
        scene_config.seed = seed;
    }
    let scene = generate_scene(&scene_config)?;

    // Benchmark masklets are the prompted targets; scene objects without a
    // prompt stay distractors, present only through the oracle bindings.
    let masklets: Vec<MaskletRecord> = scene_config
        .objects
        .iter()
        .filter(|obj| spec.prompts.iter().any(|p| p.object == obj.id))
        .map(|obj| {
            MaskletRecord::from_masklet(
                &obj.id,
                &obj.id,
                AnnotationGranularity::Whole,
                &scene.gt[&obj.id],
            )
        })
        .collect();

    let mut prompts = Vec::with_capacity(spec.prompts.len());
    for p in &spec.prompts {
        let masklet = scene
            .gt
            .get(&p.object)
            .ok_or_else(|| RunnerError::UnknownObject(p.object.clone()))?;
        let expression = p.expression.clone().unwrap_or_else(|| p.object.clone());
        let visual = || -> Result<(usize, &BinaryMask), RunnerError> {
            let frame = masklet
                .first_frame()
                .ok_or_else(|| RunnerError::NeverVisible(p.object.clone()))?;
            Ok((frame, masklet.get(frame).expect("first frame present")))
        };
        let (payload, first_appearance) = match p.modality.as_str() {
            "text" => (PromptPayload::Text(expression), None),
            "audio-transcript" => (
                PromptPayload::AudioTranscript {
                    expression,
                    source: p.source.clone().unwrap_or_else(|| "scripted-asr".into()),
                },
                None,
            ),
            "visual-points" => {
                let (frame, mask) = visual()?;
                (PromptPayload::VisualPoints(three_points(mask)), Some(frame))
            }
            "visual-box" => {
                let (frame, mask) = visual()?;
                let (x0, y0, x1, y1) = bounding_box(mask);
                (PromptPayload::VisualBox { x0, y0, x1, y1 }, Some(frame))
            }
            "visual-mask" => {
                let (frame, mask) = visual()?;
                (PromptPayload::VisualMask(rle_encode(mask)), Some(frame))
            }
            other => {
                return Err(RunnerError::UnresolvablePrompt {
                    masklet: p.object.clone(),
                    reason: format!("unknown modality {other:?}"),
                })
            }
        };
        prompts.push(PromptRecord { masklet_id: p.object.clone(), payload, first_appearance });
    }

    let mut manifest = Manifest::new(&spec.dataset);
    manifest.videos.push(VideoRecord {
        id: spec.video_id.clone(),
        frame_size: scene_config.frame_size,
        frame_count: scene_config.num_frames,
        fps: spec.fps,
        dataset: None,
        masklets,
        prompts,
        scenario: Some(ScenarioBinding {
            scene: scene_config,
            detector: spec.detector.clone(),
            tracker: spec.tracker.clone(),
        }),
    });
    Ok(manifest)
}

/// Prompt-modality filter for a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ModalityFilter {
    #[default]
    All,
    Visual,
    Text,
    Audio,
}

impl ModalityFilter {
    pub fn accepts(&self, payload: &PromptPayload) -> bool {
        match self {
            ModalityFilter::All => true,
            ModalityFilter::Visual => payload.is_visual(),
            ModalityFilter::Text => matches!(payload, PromptPayload::Text(_)),
            ModalityFilter::Audio => matches!(payload, PromptPayload::AudioTranscript { .. }),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub modality: ModalityFilter,
    pub engine: EngineConfig,
    /// Worker threads for per-task parallelism.
    pub workers: usize,
    /// Optional scene-seed override; by default the manifest's seed is used.
    pub seed: Option<u64>,
    /// Capture a memory-bank snapshot at the end of each task.
    pub dump_memory: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            modality: ModalityFilter::All,
            engine: EngineConfig::default(),
            workers: 1,
            seed: None,
            dump_memory: false,
        }
    }
}

/// One completed (masklet, prompt) task.
#[derive(Clone, Debug)]
pub struct TaskResult {
    pub video_id: String,
    pub masklet_id: String,
    /// Id the prediction is recorded under; differs from `masklet_id` only
    /// when several prompts target the same masklet in one run.
    pub prediction_id: String,
    pub modality: &'static str,
    pub record: MaskletRecord,
    pub events: Vec<TransitionEvent>,
    pub memory_snapshot: Option<Vec<MemorySnapshotRecord>>,
}

impl TaskResult {
    /// File stem for this task's event log.
    pub fn log_name(&self) -> String {
        format!("{}__{}__{}", self.video_id, self.prediction_id, self.modality)
    }

    pub fn events_jsonl(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&event.to_json_line());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug)]
pub struct RunArtifacts {
    pub predictions: Manifest,
    pub tasks: Vec<TaskResult>,
}

/// Resolve a prompt record against the video's ground truth. Visual point
/// and box prompts are resolved to the target's mask at the prompt frame
/// (there is no learned prompt decoder here); mask prompts decode directly;
/// linguistic prompts normalize to an expression.
pub fn resolve_prompt(
    video: &VideoRecord,
    masklet_id: &str,
    payload: &PromptPayload,
    first_appearance: Option<usize>,
) -> Result<ResolvedPrompt, RunnerError> {
    let unresolvable = |reason: &str| RunnerError::UnresolvablePrompt {
        masklet: masklet_id.to_string(),
        reason: reason.to_string(),
    };
    match payload {
        PromptPayload::Text(expr) => {
            Ok(ResolvedPrompt::Linguistic { expression: normalize_expression(expr) })
        }
        PromptPayload::AudioTranscript { expression, .. } => {
            Ok(ResolvedPrompt::Linguistic { expression: normalize_expression(expression) })
        }
        PromptPayload::VisualMask(rle) => {
            let frame = first_appearance.ok_or_else(|| unresolvable("missing prompt frame"))?;
            Ok(ResolvedPrompt::Visual { prompt_frame: frame, init_mask: rle_decode(rle)? })
        }
        PromptPayload::VisualPoints(points) => {
            let frame = first_appearance.ok_or_else(|| unresolvable("missing prompt frame"))?;
            let gt = gt_mask_at(video, masklet_id, frame)
                .ok_or_else(|| unresolvable("target absent at prompt frame"))?;
            for p in points {
                if p.positive && !gt.get(p.x, p.y) {
                    return Err(unresolvable(&format!(
                        "positive point ({}, {}) misses the target",
                        p.x, p.y
                    )));
                }
            }
            Ok(ResolvedPrompt::Visual { prompt_frame: frame, init_mask: gt })
        }
        PromptPayload::VisualBox { x0, y0, x1, y1 } => {
            let frame = first_appearance.ok_or_else(|| unresolvable("missing prompt frame"))?;
            let gt = gt_mask_at(video, masklet_id, frame)
                .ok_or_else(|| unresolvable("target absent at prompt frame"))?;
            if gt.count_in_rect(*x0, *x1, *y0, *y1) == 0 {
                return Err(unresolvable("box does not cover the target"));
            }
            Ok(ResolvedPrompt::Visual { prompt_frame: frame, init_mask: gt })
        }
    }
}

fn gt_mask_at(video: &VideoRecord, masklet_id: &str, frame: usize) -> Option<BinaryMask> {
    let record = video.masklets.iter().find(|m| m.id == masklet_id)?;
    let entry = record.frames.iter().find(|e| e.frame_index == frame)?;
    rle_decode(&entry.rle).ok()
}

struct Task {
    video_index: usize,
    masklet_id: String,
    prediction_id: String,
    modality: &'static str,
    prompt: ResolvedPrompt,
}

/// Run every prompt in the manifest that passes the modality filter.
pub fn run_manifest(manifest: &Manifest, options: &RunOptions) -> Result<RunArtifacts, RunnerError> {
    // Scenes are shared per video across that video's tasks.
    let mut scenes: Vec<Option<Arc<Scene>>> = Vec::with_capacity(manifest.videos.len());
    let mut tasks: Vec<Task> = Vec::new();
    for (video_index, video) in manifest.videos.iter().enumerate() {
        let selected: Vec<&crate::dataset::PromptRecord> = video
            .prompts
            .iter()
            .filter(|p| options.modality.accepts(&p.payload))
            .collect();
        if selected.is_empty() {
            scenes.push(None);
            continue;
        }
        let binding: &ScenarioBinding = video
            .scenario
            .as_ref()
            .ok_or_else(|| RunnerError::NoScenario(video.id.clone()))?;
        let mut scene_config = binding.scene.clone();
        if let Some(seed) = options.seed {
            scene_config.seed = seed;
        }
        scenes.push(Some(Arc::new(generate_scene(&scene_config)?)));

        for prompt in selected {
            let resolved =
                resolve_prompt(video, &prompt.masklet_id, &prompt.payload, prompt.first_appearance)?;
            // Suffix the prediction id when several selected prompts share
            // one masklet, so records stay unique.
            let shared = video
                .prompts
                .iter()
                .filter(|p| {
                    p.masklet_id == prompt.masklet_id && options.modality.accepts(&p.payload)
                })
                .count();
            let modality = prompt.payload.modality_name();
            let prediction_id = if shared > 1 {
                format!("{}@{}", prompt.masklet_id, modality)
            } else {
                prompt.masklet_id.clone()
            };
            tasks.push(Task {
                video_index,
                masklet_id: prompt.masklet_id.clone(),
                prediction_id,
                modality,
                prompt: resolved,
            });
        }
    }

    let manifest_videos = &manifest.videos;
    let scenes_ref = &scenes;
    let results: Vec<Result<TaskResult, RunnerError>> =
        par::map_ordered(tasks, options.workers, |task| {
            let video = &manifest_videos[task.video_index];
            let scene = scenes_ref[task.video_index].as_ref().expect("scene built").clone();
            let binding = video.scenario.as_ref().expect("binding checked");
            let detector = ScriptedDetector::new(scene.clone(), binding.detector.clone());
            let tracker = DriftingTracker::new(scene.clone(), binding.tracker.clone());
            let embedder = SceneEmbedder::new(scene.clone());
            let mut engine = Engine::new(
                Box::new(detector),
                Box::new(tracker),
                Box::new(embedder),
                task.prompt,
                video.frame_size,
                options.engine.clone(),
            )?;
            let run = engine.run_video(video.frame_count)?;
            let gt_record = video
                .masklets
                .iter()
                .find(|m| m.id == task.masklet_id)
                .expect("prompt target validated");
            let record = MaskletRecord::from_masklet(
                &task.prediction_id,
                &gt_record.category,
                gt_record.granularity,
                &run.masklet,
            );
            Ok(TaskResult {
                video_id: video.id.clone(),
                masklet_id: task.masklet_id,
                prediction_id: task.prediction_id,
                modality: task.modality,
                record,
                events: run.events,
                memory_snapshot: options.dump_memory.then(|| engine.memory().snapshot()),
            })
        });
    let task_results: Vec<TaskResult> = results.into_iter().collect::<Result<_, _>>()?;

    let mut predictions = Manifest::new(&manifest.dataset);
    for video in manifest_videos {
        let records: Vec<MaskletRecord> = task_results
            .iter()
            .filter(|t| t.video_id == video.id)
            .map(|t| t.record.clone())
            .collect();
        if records.is_empty() {
            continue;
        }
        predictions.videos.push(VideoRecord {
            id: video.id.clone(),
            frame_size: video.frame_size,
            frame_count: video.frame_count,
            fps: video.fps,
            dataset: video.dataset.clone(),
            masklets: records,
            prompts: Vec::new(),
            scenario: None,
        });
    }

    Ok(RunArtifacts { predictions, tasks: task_results })
}
