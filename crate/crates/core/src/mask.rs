//! Binary mask primitives: set operations, morphology, boundary extraction,
//! region similarity (J) and boundary accuracy (F).
//!
//! Masks are bit-packed row-major (one `u64` word per 64 pixels) so that the
//! per-frame kernels stay cheap at video resolutions. Pixels outside the
//! frame count as unset for every operation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("mask dimensions differ: {a:?} vs {b:?}")]
    ShapeMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("mask dimensions must be at least 1x1, got {0}x{1}")]
    EmptyFrame(usize, usize),
}

const WORD_BITS: usize = 64;

/// 2D bitmap over a frame grid, row-major, bit set = foreground pixel.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    words_per_row: usize,
    bits: Vec<u64>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "BinaryMask({}x{}, {} set)",
            self.width,
            self.height,
            self.count_ones()
        )
    }
}

impl BinaryMask {
    /// All-background mask. Panics on a zero-sized frame; frame dimensions
    /// come from validated configs.
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1, "frame must be at least 1x1");
        let words_per_row = width.div_ceil(WORD_BITS);
        BinaryMask {
            width,
            height,
            words_per_row,
            bits: vec![0; words_per_row * height],
        }
    }

    /// All-foreground mask.
    pub fn filled(width: usize, height: usize) -> Self {
        let mut m = Self::new(width, height);
        for row in 0..height {
            let (start, end) = m.row_span(row);
            for w in &mut m.bits[start..end] {
                *w = !0;
            }
        }
        m.mask_row_tails();
        m
    }

    /// Build from a per-pixel predicate.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    fn row_span(&self, row: usize) -> (usize, usize) {
        let start = row * self.words_per_row;
        (start, start + self.words_per_row)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        debug_assert!(x < self.width && y < self.height);
        let word = y * self.words_per_row + x / WORD_BITS;
        self.bits[word] >> (x % WORD_BITS) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        debug_assert!(x < self.width && y < self.height);
        let word = y * self.words_per_row + x / WORD_BITS;
        let bit = 1u64 << (x % WORD_BITS);
        if value {
            self.bits[word] |= bit;
        } else {
            self.bits[word] &= !bit;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    fn check_dims(&self, other: &BinaryMask) -> Result<(), GeometryError> {
        if self.dims() != other.dims() {
            return Err(GeometryError::ShapeMismatch {
                a: self.dims(),
                b: other.dims(),
            });
        }
        Ok(())
    }

    /// Bits in the padding tail of each row must stay zero; every mutation
    /// that shifts bits rightward re-applies this.
    fn mask_row_tails(&mut self) {
        let rem = self.width % WORD_BITS;
        if rem == 0 {
            return;
        }
        let tail = (1u64 << rem) - 1;
        for row in 0..self.height {
            let last = row * self.words_per_row + self.words_per_row - 1;
            self.bits[last] &= tail;
        }
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> Result<usize, GeometryError> {
        self.check_dims(other)?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum())
    }

    pub fn union_count(&self, other: &BinaryMask) -> Result<usize, GeometryError> {
        self.check_dims(other)?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| (a | b).count_ones() as usize)
            .sum())
    }

    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask, GeometryError> {
        self.check_dims(other)?;
        let mut out = self.clone();
        for (a, b) in out.bits.iter_mut().zip(&other.bits) {
            *a &= b;
        }
        Ok(out)
    }

    pub fn or(&self, other: &BinaryMask) -> Result<BinaryMask, GeometryError> {
        self.check_dims(other)?;
        let mut out = self.clone();
        for (a, b) in out.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
        Ok(out)
    }

    /// Pixels in `self` but not in `other`.
    pub fn and_not(&self, other: &BinaryMask) -> Result<BinaryMask, GeometryError> {
        self.check_dims(other)?;
        let mut out = self.clone();
        for (a, b) in out.bits.iter_mut().zip(&other.bits) {
            *a &= !b;
        }
        Ok(out)
    }

    /// Count set pixels inside `[x0, x1) x [y0, y1)` (clipped to the frame).
    pub fn count_in_rect(&self, x0: usize, x1: usize, y0: usize, y1: usize) -> usize {
        let x1 = x1.min(self.width);
        let y1 = y1.min(self.height);
        if x0 >= x1 || y0 >= y1 {
            return 0;
        }
        let w0 = x0 / WORD_BITS;
        let w1 = (x1 - 1) / WORD_BITS;
        let mut total = 0usize;
        for y in y0..y1 {
            let base = y * self.words_per_row;
            for w in w0..=w1 {
                let mut word = self.bits[base + w];
                let lo = w * WORD_BITS;
                if x0 > lo {
                    word &= !0u64 << (x0 - lo);
                }
                let hi = lo + WORD_BITS;
                if x1 < hi {
                    word &= (1u64 << (x1 - lo)) - 1;
                }
                total += word.count_ones() as usize;
            }
        }
        total
    }

    /// Translate by whole pixels; content shifted outside the frame is lost,
    /// vacated pixels are background.
    pub fn translate(&self, dx: i64, dy: i64) -> BinaryMask {
        let mut out = BinaryMask::new(self.width, self.height);
        for y in 0..self.height {
            let sy = y as i64 - dy;
            if sy < 0 || sy >= self.height as i64 {
                continue;
            }
            for x in 0..self.width {
                let sx = x as i64 - dx;
                if sx < 0 || sx >= self.width as i64 {
                    continue;
                }
                if self.get(sx as usize, sy as usize) {
                    out.set(x, y, true);
                }
            }
        }
        out
    }

    /// Horizontal 3-neighbourhood erosion: keep a pixel iff itself and both
    /// horizontal neighbours are set (frame border counts as unset).
    fn erode_horizontal(&self) -> BinaryMask {
        let mut out = self.clone();
        for row in 0..self.height {
            let (start, end) = self.row_span(row);
            let src = &self.bits[start..end];
            let dst = &mut out.bits[start..end];
            for w in 0..src.len() {
                let left = src[w] << 1 | if w > 0 { src[w - 1] >> 63 } else { 0 };
                let right = src[w] >> 1 | if w + 1 < src.len() { src[w + 1] << 63 } else { 0 };
                dst[w] = src[w] & left & right;
            }
        }
        // Right frame border: the pixel at width-1 has no right neighbour.
        let rem = self.width % WORD_BITS;
        let edge_bit = if rem == 0 { 1u64 << 63 } else { 1u64 << (rem - 1) };
        for row in 0..out.height {
            let last = row * out.words_per_row + out.words_per_row - 1;
            out.bits[last] &= !edge_bit;
        }
        out
    }

    fn erode_vertical(&self) -> BinaryMask {
        let mut out = self.clone();
        for row in 0..self.height {
            let (start, end) = self.row_span(row);
            for i in start..end {
                let above = if row > 0 { self.bits[i - self.words_per_row] } else { 0 };
                let below = if row + 1 < self.height {
                    self.bits[i + self.words_per_row]
                } else {
                    0
                };
                out.bits[i] &= above & below;
            }
        }
        out
    }

    fn dilate_horizontal(&self) -> BinaryMask {
        let mut out = self.clone();
        for row in 0..self.height {
            let (start, end) = self.row_span(row);
            let src = &self.bits[start..end];
            let dst = &mut out.bits[start..end];
            for w in 0..src.len() {
                let left = src[w] << 1 | if w > 0 { src[w - 1] >> 63 } else { 0 };
                let right = src[w] >> 1 | if w + 1 < src.len() { src[w + 1] << 63 } else { 0 };
                dst[w] = src[w] | left | right;
            }
        }
        out.mask_row_tails();
        out
    }

    fn dilate_vertical(&self) -> BinaryMask {
        let mut out = self.clone();
        for row in 0..self.height {
            let (start, end) = self.row_span(row);
            for i in start..end {
                let above = if row > 0 { self.bits[i - self.words_per_row] } else { 0 };
                let below = if row + 1 < self.height {
                    self.bits[i + self.words_per_row]
                } else {
                    0
                };
                out.bits[i] |= above | below;
            }
        }
        out
    }
}

/// Structuring element for [`erode`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StructuringElement {
    /// 3x3 cross (4-neighbourhood plus centre).
    Cross3,
    /// Chebyshev ball: (2r+1) x (2r+1) square.
    Square(usize),
}

/// Intersection over union. Both masks empty scores 1.0, exactly one empty
/// scores 0.0 so that absent-target frames evaluate cleanly.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, GeometryError> {
    let inter = a.intersection_count(b)?;
    let union = a.union_count(b)?;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Chebyshev (square) dilation by `radius`. Radius 0 is the identity.
pub fn dilate(m: &BinaryMask, radius: usize) -> BinaryMask {
    let mut out = m.clone();
    for _ in 0..radius {
        out = out.dilate_horizontal();
    }
    for _ in 0..radius {
        out = out.dilate_vertical();
    }
    out
}

/// Erosion with the given element; out-of-frame pixels count as unset, so
/// foreground touching the border erodes there.
pub fn erode(m: &BinaryMask, element: StructuringElement) -> BinaryMask {
    match element {
        StructuringElement::Cross3 => {
            let h = m.erode_horizontal();
            let v = m.erode_vertical();
            h.and(&v).expect("same dims")
        }
        StructuringElement::Square(radius) => {
            let mut out = m.clone();
            for _ in 0..radius {
                out = out.erode_horizontal();
            }
            for _ in 0..radius {
                out = out.erode_vertical();
            }
            out
        }
    }
}

/// Mask whose set pixels trace an object's inner boundary: the source mask
/// minus its cross-3 erosion, one pixel thick, always a subset of the source.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundaryMap(BinaryMask);

impl BoundaryMap {
    pub fn as_mask(&self) -> &BinaryMask {
        &self.0
    }

    pub fn into_mask(self) -> BinaryMask {
        self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.0.count_ones()
    }
}

/// Morphological-gradient boundary: `m AND NOT erode(m, cross3)`.
pub fn boundary_map(m: &BinaryMask) -> BoundaryMap {
    let eroded = erode(m, StructuringElement::Cross3);
    BoundaryMap(m.and_not(&eroded).expect("same dims"))
}

/// Default boundary-match tolerance: 0.8% of the frame diagonal, at least 1.
pub fn default_boundary_tolerance(width: usize, height: usize) -> usize {
    let diag = ((width * width + height * height) as f64).sqrt();
    ((0.008 * diag).round() as usize).max(1)
}

/// Boundary F-score: precision/recall of boundary pixels matched within a
/// Chebyshev distance of `tolerance`. Both boundaries empty scores 1.0,
/// exactly one empty scores 0.0.
pub fn boundary_f(
    pred: &BinaryMask,
    gt: &BinaryMask,
    tolerance: usize,
) -> Result<f64, GeometryError> {
    pred.check_dims(gt)?;
    let pb = boundary_map(pred);
    let gb = boundary_map(gt);
    let np = pb.count_ones();
    let ng = gb.count_ones();
    if np == 0 && ng == 0 {
        return Ok(1.0);
    }
    if np == 0 || ng == 0 {
        return Ok(0.0);
    }
    let gt_zone = dilate(gb.as_mask(), tolerance);
    let pred_zone = dilate(pb.as_mask(), tolerance);
    let precision = pb.as_mask().intersection_count(&gt_zone)? as f64 / np as f64;
    let recall = gb.as_mask().intersection_count(&pred_zone)? as f64 / ng as f64;
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Arithmetic mean of region similarity and boundary accuracy.
pub fn jf_mean(j: f64, f: f64) -> Result<f64, GeometryError> {
    for v in [j, f] {
        if !(0.0..=1.0).contains(&v) || v.is_nan() {
            return Err(GeometryError::ScoreOutOfRange(v));
        }
    }
    Ok((j + f) / 2.0)
}
