//! Masklet- and dataset-level metrics: per-frame J (region similarity) and
//! F (boundary accuracy) under the two evaluation protocols, frame-level
//! presence metrics, and throughput reporting.

use serde::Serialize;
use thiserror::Error;

use crate::dataset::{AnnotationGranularity, DatasetError, Manifest};
use crate::mask::{boundary_f, default_boundary_tolerance, iou, GeometryError};
use crate::masklet::Masklet;
use crate::par;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("masklets misaligned: {0}")]
    Misaligned(String),
    #[error("missing prediction for video {video} masklet {masklet}")]
    MissingPrediction { video: String, masklet: String },
    #[error("protocol needs a prompt frame but masklet {0} has no visual prompt")]
    NoPromptFrame(String),
    #[error("duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Frame range the metrics average over: the whole video regardless of
/// presence, or everything from the prompt frame on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalProtocol {
    FromFirstFrame,
    FromPromptFrame(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MaskletMetrics {
    pub j: f64,
    pub f: f64,
    pub jf: f64,
    pub frames_evaluated: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PresenceMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    /// tp / (tp + fp); absent when nothing was predicted present.
    pub precision: Option<f64>,
    /// fp / (fp + tn); absent when the target is never absent.
    pub fpr: Option<f64>,
}

/// Per-frame J and F averaged over the protocol's frame range. Frames where
/// both masks are absent score 1, frames where exactly one is absent score
/// 0, matching the empty conventions of the geometry kernels.
pub fn eval_masklet(
    pred: &Masklet,
    gt: &Masklet,
    frame_count: usize,
    frame_size: (usize, usize),
    protocol: EvalProtocol,
    tolerance: Option<usize>,
) -> Result<MaskletMetrics, EvalError> {
    let start = match protocol {
        EvalProtocol::FromFirstFrame => 0,
        EvalProtocol::FromPromptFrame(f) => {
            if f >= frame_count {
                return Err(EvalError::Misaligned(format!(
                    "prompt frame {f} outside video of {frame_count} frames"
                )));
            }
            f
        }
    };
    for (name, masklet) in [("prediction", pred), ("ground truth", gt)] {
        if let Some(last) = masklet.last_frame() {
            if last >= frame_count {
                return Err(EvalError::Misaligned(format!(
                    "{name} has frame {last} outside video of {frame_count} frames"
                )));
            }
        }
        for (frame, mask) in masklet.iter() {
            if mask.dims() != frame_size {
                return Err(EvalError::Misaligned(format!(
                    "{name} frame {frame} has dims {:?}, video is {frame_size:?}",
                    mask.dims()
                )));
            }
        }
    }

    let tolerance = tolerance.unwrap_or_else(|| default_boundary_tolerance(frame_size.0, frame_size.1));
    let mut j_sum = 0.0;
    let mut f_sum = 0.0;
    let mut frames = 0usize;
    for frame in start..frame_count {
        frames += 1;
        match (pred.get(frame), gt.get(frame)) {
            (None, None) => {
                j_sum += 1.0;
                f_sum += 1.0;
            }
            (Some(_), None) | (None, Some(_)) => {}
            (Some(p), Some(g)) => {
                j_sum += iou(p, g)?;
                f_sum += boundary_f(p, g, tolerance)?;
            }
        }
    }
    let j = j_sum / frames as f64;
    let f = f_sum / frames as f64;
    Ok(MaskletMetrics { j, f, jf: (j + f) / 2.0, frames_evaluated: frames })
}

/// Frame-level presence classification over the full video: a frame counts
/// as predicted-present iff its predicted mask is non-empty.
pub fn presence_metrics(pred: &Masklet, gt: &Masklet, frame_count: usize) -> PresenceMetrics {
    let mut tp = 0;
    let mut fp = 0;
    let mut tn = 0;
    let mut fn_ = 0;
    for frame in 0..frame_count {
        match (pred.is_present(frame), gt.is_present(frame)) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let precision = (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64);
    let fpr = (fp + tn > 0).then(|| fp as f64 / (fp + tn) as f64);
    PresenceMetrics { tp, fp, tn, fn_, precision, fpr }
}

/// Frames per second over a wall-clock interval.
pub fn fps_report(frame_count: usize, wall_seconds: f64) -> Result<f64, EvalError> {
    if !(wall_seconds > 0.0) {
        return Err(EvalError::NonPositiveDuration(wall_seconds));
    }
    Ok(frame_count as f64 / wall_seconds)
}

/// Protocol selection for a whole evaluation run; the prompt frame comes
/// from each masklet's visual prompt record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProtocolKind {
    FromFirstFrame,
    FromPromptFrame,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalRow {
    pub dataset: String,
    pub video: String,
    pub masklet_id: String,
    pub granularity: AnnotationGranularity,
    pub metrics: MaskletMetrics,
    pub presence: PresenceMetrics,
}

#[derive(Clone, Debug, Serialize)]
pub struct AggregateRow {
    pub dataset: String,
    pub masklets: usize,
    /// Unweighted means over masklets.
    pub j: f64,
    pub f: f64,
    pub jf: f64,
    /// Pooled presence counts across the dataset's masklets.
    pub presence: PresenceMetrics,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub aggregates: Vec<AggregateRow>,
}

/// Evaluate a predictions manifest against ground truth. Predictions match
/// ground-truth masklets by id within each video; every ground-truth
/// masklet must be covered. Per-masklet work runs through the parallel map,
/// merged back in manifest order.
pub fn eval_dataset(
    gt_manifest: &Manifest,
    predictions: &Manifest,
    protocol: ProtocolKind,
    workers: usize,
) -> Result<EvalReport, EvalError> {
    struct Task<'a> {
        dataset: String,
        video: String,
        masklet_id: String,
        granularity: AnnotationGranularity,
        pred: &'a crate::dataset::MaskletRecord,
        gt: &'a crate::dataset::MaskletRecord,
        frame_count: usize,
        frame_size: (usize, usize),
        protocol: EvalProtocol,
    }

    let mut tasks = Vec::new();
    for video in &gt_manifest.videos {
        let pred_video = predictions.video(&video.id).ok_or_else(|| EvalError::MissingPrediction {
            video: video.id.clone(),
            masklet: "*".into(),
        })?;
        for masklet in &video.masklets {
            let pred_record = pred_video
                .masklets
                .iter()
                .find(|m| m.id == masklet.id)
                .ok_or_else(|| EvalError::MissingPrediction {
                    video: video.id.clone(),
                    masklet: masklet.id.clone(),
                })?;
            let protocol = match protocol {
                ProtocolKind::FromFirstFrame => EvalProtocol::FromFirstFrame,
                ProtocolKind::FromPromptFrame => {
                    let frame = video
                        .prompts
                        .iter()
                        .find(|p| p.masklet_id == masklet.id && p.payload.is_visual())
                        .and_then(|p| p.first_appearance)
                        .ok_or_else(|| EvalError::NoPromptFrame(masklet.id.clone()))?;
                    EvalProtocol::FromPromptFrame(frame)
                }
            };
            tasks.push(Task {
                dataset: video.dataset.clone().unwrap_or_else(|| gt_manifest.dataset.clone()),
                video: video.id.clone(),
                masklet_id: masklet.id.clone(),
                granularity: masklet.granularity,
                pred: pred_record,
                gt: masklet,
                frame_count: video.frame_count,
                frame_size: video.frame_size,
                protocol,
            });
        }
    }

    let results: Vec<Result<EvalRow, EvalError>> = par::map_ordered(tasks, workers, |task| {
        let pred = task.pred.to_masklet()?;
        let gt = task.gt.to_masklet()?;
        let metrics =
            eval_masklet(&pred, &gt, task.frame_count, task.frame_size, task.protocol, None)?;
        let presence = presence_metrics(&pred, &gt, task.frame_count);
        Ok(EvalRow {
            dataset: task.dataset,
            video: task.video,
            masklet_id: task.masklet_id,
            granularity: task.granularity,
            metrics,
            presence,
        })
    });
    let rows: Vec<EvalRow> = results.into_iter().collect::<Result<_, _>>()?;

    let mut order: Vec<String> = Vec::new();
    for row in &rows {
        if !order.contains(&row.dataset) {
            order.push(row.dataset.clone());
        }
    }
    let aggregates = order
        .into_iter()
        .map(|dataset| {
            let members: Vec<&EvalRow> = rows.iter().filter(|r| r.dataset == dataset).collect();
            let n = members.len() as f64;
            let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
            for r in &members {
                tp += r.presence.tp;
                fp += r.presence.fp;
                tn += r.presence.tn;
                fn_ += r.presence.fn_;
            }
            AggregateRow {
                dataset,
                masklets: members.len(),
                j: members.iter().map(|r| r.metrics.j).sum::<f64>() / n,
                f: members.iter().map(|r| r.metrics.f).sum::<f64>() / n,
                jf: members.iter().map(|r| r.metrics.jf).sum::<f64>() / n,
                presence: PresenceMetrics {
                    tp,
                    fp,
                    tn,
                    fn_,
                    precision: (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64),
                    fpr: (fp + tn > 0).then(|| fp as f64 / (fp + tn) as f64),
                },
            }
        })
        .collect();

    Ok(EvalReport { rows, aggregates })
}

/// Unit-interval score as percent tenths, rounded half away from zero.
fn pct_tenths(v: f64) -> i64 {
    (v * 1000.0).round() as i64
}

fn fmt_tenths(t: i64) -> String {
    format!("{}.{}", t / 10, t % 10)
}

fn fmt_pct(v: f64) -> String {
    fmt_tenths(pct_tenths(v))
}

fn fmt_opt_pct(v: Option<f64>) -> String {
    v.map(fmt_pct).unwrap_or_else(|| "-".into())
}

/// J&F display cell: the mean of the one-decimal J and F percentages,
/// rounded half up, so the three columns are mutually consistent.
fn fmt_jf(j: f64, f: f64) -> String {
    fmt_tenths((pct_tenths(j) + pct_tenths(f) + 1) / 2)
}

/// CSV rendering: one row per masklet, then one aggregate row per dataset.
/// Scores are percentages at one decimal.
pub fn render_csv(report: &EvalReport) -> String {
    let mut out = String::from("dataset,video,masklet_id,granularity,J,F,JF,precision,fpr,frames\n");
    let granularity_name = |g: AnnotationGranularity| match g {
        AnnotationGranularity::Whole => "whole",
        AnnotationGranularity::Part => "part",
    };
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            row.dataset,
            row.video,
            row.masklet_id,
            granularity_name(row.granularity),
            fmt_pct(row.metrics.j),
            fmt_pct(row.metrics.f),
            fmt_jf(row.metrics.j, row.metrics.f),
            fmt_opt_pct(row.presence.precision),
            fmt_opt_pct(row.presence.fpr),
            row.metrics.frames_evaluated,
        ));
    }
    for agg in &report.aggregates {
        out.push_str(&format!(
            "{},all,aggregate,-,{},{},{},{},{},{}\n",
            agg.dataset,
            fmt_pct(agg.j),
            fmt_pct(agg.f),
            fmt_jf(agg.j, agg.f),
            fmt_opt_pct(agg.presence.precision),
            fmt_opt_pct(agg.presence.fpr),
            agg.masklets,
        ));
    }
    out
}
