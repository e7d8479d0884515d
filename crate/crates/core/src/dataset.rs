//! Masklet benchmark format: JSON manifests with inline column-major RLE
//! masks, prompt records, an instance-linking converter, and dataset
//! statistics. Field names are documented in FORMAT.md at the repo root.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{iou, BinaryMask};
use crate::masklet::Masklet;
use crate::scenario::{DriftingTrackerConfig, SceneConfig, ScriptedDetectorConfig};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("rle counts sum to {got}, expected {want} for {height}x{width}")]
    RleSumMismatch { got: usize, want: usize, height: usize, width: usize },
    #[error("rle has a zero count past the first position")]
    RleZeroRun,
    #[error("rle counts string contains a non-integer token: {0:?}")]
    RleParse(String),
    #[error("unsupported manifest version {0}")]
    UnsupportedVersion(u32),
    #[error("manifest invalid: {0}")]
    InvalidManifest(String),
    #[error("within-frame instance masks overlap at frame {0}")]
    OverlappingInstances(usize),
}

/// Uncompressed run-length encoding over a column-major pixel scan, starting
/// with the background run (which may be zero). `size` is (height, width).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rle {
    pub size: (usize, usize),
    #[serde(
        serialize_with = "serialize_counts",
        deserialize_with = "deserialize_counts"
    )]
    pub counts: Vec<usize>,
}

fn serialize_counts<S: serde::Serializer>(counts: &[usize], s: S) -> Result<S::Ok, S::Error> {
    let joined = counts.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ");
    s.serialize_str(&joined)
}

fn deserialize_counts<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<usize>, D::Error> {
    let raw = String::deserialize(d)?;
    raw.split_whitespace()
        .map(|tok| tok.parse::<usize>().map_err(|_| serde::de::Error::custom(format!("bad rle count {tok:?}"))))
        .collect()
}

/// Encode a mask. The scan is column-major: pixel (x, y) sits at index
/// `y + height * x`.
pub fn rle_encode(mask: &BinaryMask) -> Rle {
    let (w, h) = mask.dims();
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0usize;
    for x in 0..w {
        for y in 0..h {
            let v = mask.get(x, y);
            if v != current {
                counts.push(run);
                run = 0;
                current = v;
            }
            run += 1;
        }
    }
    counts.push(run);
    Rle { size: (h, w), counts }
}

pub fn rle_decode(rle: &Rle) -> Result<BinaryMask, DatasetError> {
    let (h, w) = rle.size;
    let want = h * w;
    let got: usize = rle.counts.iter().sum();
    if got != want {
        return Err(DatasetError::RleSumMismatch { got, want, height: h, width: w });
    }
    if rle.counts.iter().skip(1).any(|c| *c == 0) {
        return Err(DatasetError::RleZeroRun);
    }
    let mut mask = BinaryMask::new(w, h);
    let mut idx = 0usize;
    let mut value = false;
    for &run in &rle.counts {
        if value {
            for i in idx..idx + run {
                mask.set(i / h, i % h, true);
            }
        }
        idx += run;
        value = !value;
    }
    Ok(mask)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationGranularity {
    Whole,
    Part,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub frame_index: usize,
    pub rle: Rle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskletRecord {
    pub id: String,
    pub category: String,
    pub granularity: AnnotationGranularity,
    pub frames: Vec<FrameEntry>,
}

impl MaskletRecord {
    pub fn from_masklet(
        id: &str,
        category: &str,
        granularity: AnnotationGranularity,
        masklet: &Masklet,
    ) -> Self {
        MaskletRecord {
            id: id.to_string(),
            category: category.to_string(),
            granularity,
            frames: masklet
                .iter()
                .map(|(frame_index, mask)| FrameEntry { frame_index, rle: rle_encode(mask) })
                .collect(),
        }
    }

    pub fn to_masklet(&self) -> Result<Masklet, DatasetError> {
        let mut masklet = Masklet::new();
        for entry in &self.frames {
            masklet.insert(entry.frame_index, rle_decode(&entry.rle)?);
        }
        Ok(masklet)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPoint {
    pub x: usize,
    pub y: usize,
    pub positive: bool,
}

/// Prompt payload, tagged by modality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "modality", content = "payload", rename_all = "kebab-case")]
pub enum PromptPayload {
    VisualPoints(Vec<PromptPoint>),
    VisualBox { x0: usize, y0: usize, x1: usize, y1: usize },
    VisualMask(Rle),
    Text(String),
    AudioTranscript { expression: String, source: String },
}

impl PromptPayload {
    pub fn modality_name(&self) -> &'static str {
        match self {
            PromptPayload::VisualPoints(_) => "visual-points",
            PromptPayload::VisualBox { .. } => "visual-box",
            PromptPayload::VisualMask(_) => "visual-mask",
            PromptPayload::Text(_) => "text",
            PromptPayload::AudioTranscript { .. } => "audio-transcript",
        }
    }

    pub fn is_visual(&self) -> bool {
        matches!(
            self,
            PromptPayload::VisualPoints(_) | PromptPayload::VisualBox { .. } | PromptPayload::VisualMask(_)
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub masklet_id: String,
    #[serde(flatten)]
    pub payload: PromptPayload,
    /// For visual prompts: the frame the prompt is given on (the target's
    /// first appearance by convention).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_appearance: Option<usize>,
}

/// Scripted-oracle bindings a generated scenario carries so that runs are
/// hermetic: the manifest is the complete description of the experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioBinding {
    pub scene: SceneConfig,
    pub detector: ScriptedDetectorConfig,
    pub tracker: DriftingTrackerConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VideoRecord {
    pub id: String,
    /// (width, height) in pixels.
    pub frame_size: (usize, usize),
    pub frame_count: usize,
    /// Nominal frames per second, used for duration statistics.
    pub fps: f64,
    /// Per-video dataset tag; falls back to the manifest-level name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    pub masklets: Vec<MaskletRecord>,
    pub prompts: Vec<PromptRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioBinding>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset: String,
    pub format_version: u32,
    pub videos: Vec<VideoRecord>,
}

impl Manifest {
    pub fn new(dataset: &str) -> Self {
        Manifest { dataset: dataset.to_string(), format_version: FORMAT_VERSION, videos: Vec::new() }
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json_str(raw: &str) -> Result<Self, DatasetError> {
        let manifest: Manifest = serde_json::from_str(raw)?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn video(&self, id: &str) -> Option<&VideoRecord> {
        self.videos.iter().find(|v| v.id == id)
    }
}

/// Structural validation: version, unique ids, index ranges, RLE shape
/// agreement, and prompt references.
pub fn validate_manifest(manifest: &Manifest) -> Result<(), DatasetError> {
    if manifest.format_version != FORMAT_VERSION {
        return Err(DatasetError::UnsupportedVersion(manifest.format_version));
    }
    let mut video_ids = HashSet::new();
    for video in &manifest.videos {
        if !video_ids.insert(video.id.as_str()) {
            return Err(DatasetError::InvalidManifest(format!("duplicate video id {}", video.id)));
        }
        if video.frame_count == 0 || video.frame_size.0 == 0 || video.frame_size.1 == 0 {
            return Err(DatasetError::InvalidManifest(format!(
                "video {} has an empty frame grid or zero frames",
                video.id
            )));
        }
        if !(video.fps > 0.0) {
            return Err(DatasetError::InvalidManifest(format!("video {} has non-positive fps", video.id)));
        }
        let mut masklet_ids = HashSet::new();
        for masklet in &video.masklets {
            if !masklet_ids.insert(masklet.id.as_str()) {
                return Err(DatasetError::InvalidManifest(format!(
                    "video {} has duplicate masklet id {}",
                    video.id, masklet.id
                )));
            }
            let mut prev: Option<usize> = None;
            for entry in &masklet.frames {
                if entry.frame_index >= video.frame_count {
                    return Err(DatasetError::InvalidManifest(format!(
                        "masklet {} frame {} outside video {} of {} frames",
                        masklet.id, entry.frame_index, video.id, video.frame_count
                    )));
                }
                if let Some(p) = prev {
                    if entry.frame_index <= p {
                        return Err(DatasetError::InvalidManifest(format!(
                            "masklet {} frame indices not strictly increasing",
                            masklet.id
                        )));
                    }
                }
                prev = Some(entry.frame_index);
                let (h, w) = entry.rle.size;
                if (w, h) != video.frame_size {
                    return Err(DatasetError::InvalidManifest(format!(
                        "masklet {} rle size {:?} does not match video frame size {:?}",
                        masklet.id,
                        (w, h),
                        video.frame_size
                    )));
                }
                rle_decode(&entry.rle)?;
            }
        }
        for prompt in &video.prompts {
            if !masklet_ids.contains(prompt.masklet_id.as_str()) {
                return Err(DatasetError::InvalidManifest(format!(
                    "prompt references unknown masklet {} in video {}",
                    prompt.masklet_id, video.id
                )));
            }
            if prompt.payload.is_visual() {
                match prompt.first_appearance {
                    Some(f) if f < video.frame_count => {}
                    _ => {
                        return Err(DatasetError::InvalidManifest(format!(
                            "visual prompt for masklet {} needs a valid first_appearance frame",
                            prompt.masklet_id
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkOptions {
    /// Minimum cross-frame IoU for two instances to join one masklet.
    pub iou_threshold: f64,
    /// Frames a masklet may sit unmatched and still resume. Zero means only
    /// consecutive-frame matches link.
    pub patience: usize,
}

impl Default for LinkOptions {
    fn default() -> Self {
        LinkOptions { iou_threshold: 0.5, patience: 0 }
    }
}

/// Greedy descending-IoU association of per-frame instance masks into
/// masklets. Within a frame the masks must be pairwise disjoint; the
/// first-set-pixel anchor of each mask breaks score ties, which makes the
/// result independent of within-frame input order.
pub fn link_instances(
    per_frame: &[Vec<BinaryMask>],
    options: &LinkOptions,
) -> Result<Vec<MaskletRecord>, DatasetError> {
    struct Track {
        masklet: Masklet,
        last_frame: usize,
        last_mask: BinaryMask,
    }

    for (frame, masks) in per_frame.iter().enumerate() {
        for i in 0..masks.len() {
            for j in i + 1..masks.len() {
                if masks[i].intersection_count(&masks[j]).map_err(|e| {
                    DatasetError::InvalidManifest(format!("frame {frame}: {e}"))
                })? > 0
                {
                    return Err(DatasetError::OverlappingInstances(frame));
                }
            }
        }
    }

    let anchor = |mask: &BinaryMask| -> usize {
        let (w, h) = mask.dims();
        for x in 0..w {
            for y in 0..h {
                if mask.get(x, y) {
                    return x * h + y;
                }
            }
        }
        usize::MAX
    };

    let mut tracks: Vec<Track> = Vec::new();
    for (frame, masks) in per_frame.iter().enumerate() {
        let open: Vec<usize> = (0..tracks.len())
            .filter(|&t| frame - tracks[t].last_frame <= options.patience + 1)
            .collect();

        // All (track, candidate) pairs above threshold, best overlap first.
        let mut pairs: Vec<(f64, usize, usize, usize)> = Vec::new();
        for &t in &open {
            for (c, mask) in masks.iter().enumerate() {
                let overlap = iou(&tracks[t].last_mask, mask)
                    .map_err(|e| DatasetError::InvalidManifest(format!("frame {frame}: {e}")))?;
                if overlap >= options.iou_threshold && overlap > 0.0 {
                    pairs.push((overlap, t, c, anchor(mask)));
                }
            }
        }
        pairs.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.3.cmp(&b.3))
        });

        let mut used_tracks = HashSet::new();
        let mut used_candidates = HashSet::new();
        for (_, t, c, _) in pairs {
            if used_tracks.contains(&t) || used_candidates.contains(&c) {
                continue;
            }
            used_tracks.insert(t);
            used_candidates.insert(c);
            tracks[t].masklet.insert(frame, masks[c].clone());
            tracks[t].last_frame = frame;
            tracks[t].last_mask = masks[c].clone();
        }

        // Unmatched candidates open new masklets, in anchor order so the
        // numbering never depends on input order.
        let mut newcomers: Vec<usize> =
            (0..masks.len()).filter(|c| !used_candidates.contains(c)).collect();
        newcomers.sort_by_key(|&c| anchor(&masks[c]));
        for c in newcomers {
            if masks[c].is_empty() {
                continue;
            }
            let mut masklet = Masklet::new();
            masklet.insert(frame, masks[c].clone());
            tracks.push(Track { masklet, last_frame: frame, last_mask: masks[c].clone() });
        }
    }

    Ok(tracks
        .iter()
        .enumerate()
        .map(|(i, t)| {
            MaskletRecord::from_masklet(
                &format!("masklet-{i}"),
                "instance",
                AnnotationGranularity::Whole,
                &t.masklet,
            )
        })
        .collect())
}

/// One statistics row: counts of videos, frames, masklets and masks by
/// granularity, and the mean clip duration in seconds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatsRow {
    pub dataset: String,
    pub videos: usize,
    pub frames: usize,
    pub masklets_whole: usize,
    pub masks_whole: usize,
    pub masklets_part: usize,
    pub masks_part: usize,
    pub avg_duration_secs: f64,
}

/// Aggregate per dataset tag (videos without a tag inherit the manifest
/// name), in first-appearance order.
pub fn dataset_stats(manifest: &Manifest) -> Vec<StatsRow> {
    let mut order: Vec<String> = Vec::new();
    let mut rows: std::collections::HashMap<String, (StatsRow, f64)> = std::collections::HashMap::new();
    for video in &manifest.videos {
        let name = video.dataset.clone().unwrap_or_else(|| manifest.dataset.clone());
        if !rows.contains_key(&name) {
            order.push(name.clone());
            rows.insert(
                name.clone(),
                (
                    StatsRow {
                        dataset: name.clone(),
                        videos: 0,
                        frames: 0,
                        masklets_whole: 0,
                        masks_whole: 0,
                        masklets_part: 0,
                        masks_part: 0,
                        avg_duration_secs: 0.0,
                    },
                    0.0,
                ),
            );
        }
        let (row, duration_sum) = rows.get_mut(&name).expect("row exists");
        row.videos += 1;
        row.frames += video.frame_count;
        *duration_sum += video.frame_count as f64 / video.fps;
        for masklet in &video.masklets {
            match masklet.granularity {
                AnnotationGranularity::Whole => {
                    row.masklets_whole += 1;
                    row.masks_whole += masklet.frames.len();
                }
                AnnotationGranularity::Part => {
                    row.masklets_part += 1;
                    row.masks_part += masklet.frames.len();
                }
            }
        }
    }
    order
        .into_iter()
        .map(|name| {
            let (mut row, duration_sum) = rows.remove(&name).expect("row exists");
            if row.videos > 0 {
                row.avg_duration_secs = duration_sum / row.videos as f64;
            }
            row
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn rle_examples() {
        let empty = BinaryMask::new(4, 3);
        assert_eq!(rle_encode(&empty).counts, vec![12]);

        // 2x2 mask with only (x=0, y=0) set: column-major scan 1,0,0,0.
        let mut m = BinaryMask::new(2, 2);
        m.set(0, 0, true);
        let rle = rle_encode(&m);
        assert_eq!(rle.size, (2, 2));
        assert_eq!(rle.counts, vec![0, 1, 3]);
        assert_eq!(rle_decode(&rle).unwrap(), m);
    }

    #[test]
    fn rle_round_trip_on_random_masks() {
        let mut rng = SplitMix64::new(88);
        for _ in 0..50 {
            let w = 1 + rng.next_below(80);
            let h = 1 + rng.next_below(60);
            let density = rng.next_f64();
            let m = BinaryMask::from_fn(w, h, |_, _| rng.next_f64() < density);
            assert_eq!(rle_decode(&rle_encode(&m)).unwrap(), m);
        }
    }

    #[test]
    fn rle_rejects_bad_counts() {
        let bad = Rle { size: (2, 2), counts: vec![1, 1] };
        assert!(matches!(rle_decode(&bad), Err(DatasetError::RleSumMismatch { .. })));
        let zero = Rle { size: (2, 2), counts: vec![1, 0, 3] };
        assert!(matches!(rle_decode(&zero), Err(DatasetError::RleZeroRun)));
    }

    fn block(w: usize, h: usize, x0: usize, y0: usize, bw: usize, bh: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| x >= x0 && x < x0 + bw && y >= y0 && y < y0 + bh)
    }

    #[test]
    fn linking_examples() {
        // IoU 0.8-ish across two frames: 8 wide vs shifted by 1.
        let a = block(20, 10, 2, 2, 8, 4);
        let b = block(20, 10, 3, 2, 8, 4);
        let out = link_instances(&[vec![a.clone()], vec![b.clone()]], &LinkOptions::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].frames.len(), 2);

        // Weak overlap below the threshold: two masklets.
        let c = block(20, 10, 8, 2, 8, 4);
        let out = link_instances(&[vec![a.clone()], vec![c]], &LinkOptions::default()).unwrap();
        assert_eq!(out.len(), 2);

        // Empty second frame: single masklet of length 1.
        let out = link_instances(&[vec![a], vec![]], &LinkOptions::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].frames.len(), 1);
    }

    #[test]
    fn linking_rejects_overlap_and_is_order_invariant() {
        let a = block(20, 10, 2, 2, 6, 4);
        let b = block(20, 10, 4, 2, 6, 4);
        assert!(matches!(
            link_instances(&[vec![a, b]], &LinkOptions::default()),
            Err(DatasetError::OverlappingInstances(0))
        ));

        let x = block(30, 10, 1, 1, 6, 6);
        let y = block(30, 10, 20, 1, 6, 6);
        let x2 = block(30, 10, 2, 1, 6, 6);
        let y2 = block(30, 10, 21, 1, 6, 6);
        let fwd = link_instances(
            &[vec![x.clone(), y.clone()], vec![x2.clone(), y2.clone()]],
            &LinkOptions::default(),
        )
        .unwrap();
        let rev = link_instances(&[vec![y, x], vec![y2, x2]], &LinkOptions::default()).unwrap();
        assert_eq!(fwd, rev);
    }

    #[test]
    fn gap_bridging_needs_patience() {
        let a = block(20, 10, 2, 2, 8, 4);
        let frames = vec![vec![a.clone()], vec![], vec![a.clone()]];
        let strict = link_instances(&frames, &LinkOptions::default()).unwrap();
        assert_eq!(strict.len(), 2, "no bridging at patience 0");
        let patient =
            link_instances(&frames, &LinkOptions { iou_threshold: 0.5, patience: 1 }).unwrap();
        assert_eq!(patient.len(), 1, "gap of one frame bridged at patience 1");
    }

    fn tiny_manifest() -> Manifest {
        let mut masklet = Masklet::new();
        masklet.insert(0, block(8, 6, 1, 1, 3, 3));
        masklet.insert(2, block(8, 6, 2, 1, 3, 3));
        let record =
            MaskletRecord::from_masklet("obj-1", "instrument", AnnotationGranularity::Whole, &masklet);
        let mut manifest = Manifest::new("demo");
        manifest.videos.push(VideoRecord {
            id: "vid-1".into(),
            frame_size: (8, 6),
            frame_count: 4,
            fps: 2.0,
            dataset: None,
            masklets: vec![record],
            prompts: vec![PromptRecord {
                masklet_id: "obj-1".into(),
                payload: PromptPayload::Text("the instrument".into()),
                first_appearance: None,
            }],
            scenario: None,
        });
        manifest
    }

    #[test]
    fn manifest_round_trip_is_identity() {
        let manifest = tiny_manifest();
        let json = manifest.to_json_string();
        let back = Manifest::from_json_str(&json).unwrap();
        assert_eq!(back.to_json_string(), json);
        assert_eq!(back.videos[0].masklets, manifest.videos[0].masklets);
        validate_manifest(&back).unwrap();
    }

    #[test]
    fn validation_failures() {
        let mut m = tiny_manifest();
        m.format_version = 9;
        assert!(matches!(validate_manifest(&m), Err(DatasetError::UnsupportedVersion(9))));

        let mut m = tiny_manifest();
        m.videos[0].masklets[0].frames[1].frame_index = 0;
        assert!(validate_manifest(&m).is_err());

        let mut m = tiny_manifest();
        m.videos[0].prompts[0].masklet_id = "ghost".into();
        assert!(validate_manifest(&m).is_err());

        let mut m = tiny_manifest();
        m.videos[0].prompts[0].payload =
            PromptPayload::VisualPoints(vec![PromptPoint { x: 1, y: 1, positive: true }]);
        assert!(validate_manifest(&m).is_err(), "visual prompt without first_appearance");
        m.videos[0].prompts[0].first_appearance = Some(0);
        assert!(validate_manifest(&m).is_ok());
    }

    #[test]
    fn stats_basics() {
        assert!(dataset_stats(&Manifest::new("empty")).is_empty());

        let mut manifest = tiny_manifest();
        manifest.videos[0].fps = 1.0;
        manifest.videos[0].frame_count = 300;
        let rows = dataset_stats(&manifest);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].videos, 1);
        assert_eq!(rows[0].frames, 300);
        assert_eq!(rows[0].masklets_whole, 1);
        assert_eq!(rows[0].masks_whole, 2);
        assert_eq!(rows[0].avg_duration_secs, 300.0);
    }

    #[test]
    fn stats_group_by_video_dataset_tag() {
        let mut manifest = tiny_manifest();
        let mut second = manifest.videos[0].clone();
        second.id = "vid-2".into();
        second.dataset = Some("other".into());
        manifest.videos.push(second);
        let rows = dataset_stats(&manifest);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].dataset, "demo");
        assert_eq!(rows[1].dataset, "other");
    }
}
