//! Training-objective kernels as pure functions: focal/BCE mask loss, dice,
//! L1 quality loss, presence cross-entropy, and boundary cross-entropy,
//! plus their weighted sum. Used as verification oracles; no gradients.

use thiserror::Error;

use crate::mask::{boundary_map, BinaryMask, GeometryError};

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("probability grid contains values outside [0, 1]")]
    InvalidProbability,
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
}

/// Probabilities are clamped into [EPS, 1 - EPS] before any logarithm.
const EPS: f64 = 1e-7;

/// Per-pixel probability grid in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct SoftMask {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl SoftMask {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, LossError> {
        if values.len() != width * height {
            return Err(LossError::Geometry(GeometryError::ShapeMismatch {
                a: (width, height),
                b: (values.len(), 1),
            }));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(LossError::InvalidProbability);
        }
        Ok(SoftMask { width, height, values })
    }

    pub fn uniform(width: usize, height: usize, p: f64) -> Result<Self, LossError> {
        Self::new(width, height, vec![p; width * height])
    }

    /// Hard 0/1 probabilities copied from a binary mask.
    pub fn from_binary(mask: &BinaryMask) -> Self {
        let (w, h) = mask.dims();
        let mut values = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                values.push(if mask.get(x, y) { 1.0 } else { 0.0 });
            }
        }
        SoftMask { width: w, height: h, values }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn check_dims(&self, mask: &BinaryMask) -> Result<(), LossError> {
        if self.dims() != mask.dims() {
            return Err(LossError::Geometry(GeometryError::ShapeMismatch {
                a: self.dims(),
                b: mask.dims(),
            }));
        }
        Ok(())
    }
}

/// Pixel-loss flavour for [`mask_loss`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MaskLossKind {
    /// Focal term `alpha * (1 - p_t)^gamma * -ln(p_t)`.
    Focal { alpha: f64, gamma: f64 },
    /// Plain binary cross-entropy.
    Bce,
}

impl Default for MaskLossKind {
    fn default() -> Self {
        MaskLossKind::Focal { alpha: 0.25, gamma: 2.0 }
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(EPS, 1.0 - EPS)
}

fn per_pixel_mean(
    pred: &SoftMask,
    gt: &BinaryMask,
    f: impl Fn(f64, bool) -> f64,
) -> Result<f64, LossError> {
    pred.check_dims(gt)?;
    let (w, h) = pred.dims();
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            total += f(pred.values[y * w + x], gt.get(x, y));
        }
    }
    Ok(total / (w * h) as f64)
}

/// Mean per-pixel mask-prediction loss against a binary target.
pub fn mask_loss(pred: &SoftMask, gt: &BinaryMask, kind: MaskLossKind) -> Result<f64, LossError> {
    per_pixel_mean(pred, gt, |p, target| {
        let p_t = clamp_prob(if target { p } else { 1.0 - p });
        match kind {
            MaskLossKind::Focal { alpha, gamma } => alpha * (1.0 - p_t).powf(gamma) * -p_t.ln(),
            MaskLossKind::Bce => -p_t.ln(),
        }
    })
}

/// Soft dice loss `1 - (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps)` with
/// `eps = 1`, so the empty/empty case scores zero.
pub fn dice_loss(pred: &SoftMask, gt: &BinaryMask) -> Result<f64, LossError> {
    pred.check_dims(gt)?;
    const SMOOTH: f64 = 1.0;
    let (w, h) = pred.dims();
    let mut inter = 0.0;
    let mut psum = 0.0;
    let mut gsum = 0.0;
    for y in 0..h {
        for x in 0..w {
            let p = pred.values[y * w + x];
            let g = if gt.get(x, y) { 1.0 } else { 0.0 };
            inter += p * g;
            psum += p;
            gsum += g;
        }
    }
    Ok(1.0 - (2.0 * inter + SMOOTH) / (psum + gsum + SMOOTH))
}

/// L1 distance between the predicted quality score and the measured IoU.
pub fn iou_loss(predicted_s_iou: f64, actual_iou: f64) -> Result<f64, LossError> {
    for v in [predicted_s_iou, actual_iou] {
        if !(0.0..=1.0).contains(&v) {
            return Err(LossError::ScoreOutOfRange(v));
        }
    }
    Ok((predicted_s_iou - actual_iou).abs())
}

/// Binary cross-entropy on the presence score.
pub fn presence_loss(s_p: f64, present: bool) -> f64 {
    let p = clamp_prob(s_p);
    if present {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Mean per-pixel BCE of a predicted boundary grid against the boundary of
/// the ground-truth mask.
pub fn boundary_loss(pred_boundary: &SoftMask, gt_mask: &BinaryMask) -> Result<f64, LossError> {
    let target = boundary_map(gt_mask);
    per_pixel_mean(pred_boundary, target.as_mask(), |p, on_boundary| {
        let p_t = clamp_prob(if on_boundary { p } else { 1.0 - p });
        -p_t.ln()
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossComponents {
    pub mask: f64,
    pub dice: f64,
    pub iou: f64,
    pub presence: f64,
    pub boundary: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_m: f64,
    pub lambda_b: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda_m: 20.0, lambda_b: 10.0 }
    }
}

/// Weighted objective. `target_absent` zeroes the quality term so the score
/// estimator is not trained on frames without a target.
pub fn total_loss(c: &LossComponents, w: &LossWeights, target_absent: bool) -> f64 {
    let iou_term = if target_absent { 0.0 } else { c.iou };
    w.lambda_m * c.mask + c.dice + iou_term + c.presence + w.lambda_b * c.boundary
}
