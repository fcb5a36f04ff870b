//! Pixel-level detection criterion.
//!
//! An abnormal frame counts as detected at a threshold only when the boxes
//! scoring at or above it cover at least 40% of the frame's ground-truth
//! abnormal pixels. A normal frame with any box at or above the threshold
//! is a false positive. A box covers a pixel when it contains the pixel's
//! centre.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::roc::{roc, RocCurve};
use crate::math::floor;
use crate::eval::frame::frame_truth;
use crate::pack::{BBox, FeaturePack, FrameKey, RleMask};

/// Required covered fraction, as `NUM / DEN`, compared in integers.
const COVERAGE_NUM: u64 = 2;
const COVERAGE_DEN: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PixelFrame {
    pub abnormal: bool,
    pub mask: Option<RleMask>,
    pub detections: Vec<ScoredBox>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelOutcome {
    TruePositive,
    Miss,
    FalsePositive,
    TrueNegative,
}

fn pixel_range(start: f64, len: f64, limit: u32) -> (usize, usize) {
    let lo = -floor(-(start - 0.5));
    let hi = -floor(-(start + len - 0.5));
    let clamp = |v: f64| v.max(0.0).min(f64::from(limit)) as usize;
    (clamp(lo), clamp(hi))
}

/// Rasterizes boxes into a row-major `width x height` bitmap.
pub fn rasterize<'a>(boxes: impl IntoIterator<Item = &'a BBox>, width: u32, height: u32) -> Vec<bool> {
    let mut bits = alloc::vec![false; width as usize * height as usize];
    for b in boxes {
        let (x0, x1) = pixel_range(b.x, b.w, width);
        let (y0, y1) = pixel_range(b.y, b.h, height);
        for y in y0..y1 {
            let row = y * width as usize;
            for v in &mut bits[row + x0..row + x1] {
                *v = true;
            }
        }
    }
    bits
}

/// `(covered, total)` ground-truth pixel counts.
pub fn coverage<'a>(mask: &RleMask, boxes: impl IntoIterator<Item = &'a BBox>) -> (u64, u64) {
    let raster = rasterize(boxes, mask.width, mask.height);
    let mut covered = 0;
    for &[start, len] in &mask.runs {
        covered += raster[start as usize..(start + len) as usize]
            .iter()
            .filter(|&&b| b)
            .count() as u64;
    }
    (covered, mask.pixel_count())
}

pub fn meets_coverage(covered: u64, total: u64) -> bool {
    total > 0 && covered * COVERAGE_DEN >= total * COVERAGE_NUM
}

fn require_mask(frame: &PixelFrame) -> Result<&RleMask> {
    frame
        .mask
        .as_ref()
        .ok_or_else(|| Error::invalid("abnormal frame has no ground-truth mask"))
}

/// Groups per-record scores of a pack into frames with their ground truth.
pub fn pixel_frames(pack: &FeaturePack, scores: &[f64]) -> Result<Vec<PixelFrame>> {
    Error::check_dim(pack.len(), scores.len())?;
    let mut boxes: BTreeMap<FrameKey, Vec<ScoredBox>> = BTreeMap::new();
    for (r, &score) in pack.records.iter().zip(scores) {
        boxes
            .entry(FrameKey::new(r.video_id.clone(), r.frame_index))
            .or_default()
            .push(ScoredBox { bbox: r.bbox, score });
    }
    let labels = pack.labels.as_ref();
    frame_truth(pack)?
        .into_iter()
        .map(|(key, abnormal)| {
            Ok(PixelFrame {
                abnormal,
                mask: labels.and_then(|l| l.frame(&key)).and_then(|f| f.mask.clone()),
                detections: boxes.remove(&key).unwrap_or_default(),
            })
        })
        .collect()
}

pub fn pixel_level_outcomes(frames: &[PixelFrame], threshold: f64) -> Result<Vec<PixelOutcome>> {
    frames
        .iter()
        .map(|f| {
            let kept = f.detections.iter().filter(|d| d.score >= threshold).map(|d| &d.bbox);
            if f.abnormal {
                let (c, t) = coverage(require_mask(f)?, kept);
                Ok(if meets_coverage(c, t) {
                    PixelOutcome::TruePositive
                } else {
                    PixelOutcome::Miss
                })
            } else if kept.count() > 0 {
                Ok(PixelOutcome::FalsePositive)
            } else {
                Ok(PixelOutcome::TrueNegative)
            }
        })
        .collect()
}

/// Highest threshold at which an abnormal frame is detected, or `-inf` if
/// its boxes never reach the coverage requirement.
fn detection_threshold(mask: &RleMask, detections: &[ScoredBox]) -> f64 {
    let total = mask.pixel_count();
    if total == 0 {
        return f64::NEG_INFINITY;
    }
    let mut sorted: Vec<&ScoredBox> = detections.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let gt = mask.to_bitmap();
    let mut hit = alloc::vec![false; gt.len()];
    let mut covered = 0u64;
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].score;
        while i < sorted.len() && sorted[i].score == t {
            let b = &sorted[i].bbox;
            let (x0, x1) = pixel_range(b.x, b.w, mask.width);
            let (y0, y1) = pixel_range(b.y, b.h, mask.height);
            for y in y0..y1 {
                let row = y * mask.width as usize;
                for p in row + x0..row + x1 {
                    if gt[p] && !hit[p] {
                        hit[p] = true;
                        covered += 1;
                    }
                }
            }
            i += 1;
        }
        if meets_coverage(covered, total) {
            return t;
        }
    }
    f64::NEG_INFINITY
}

/// ROC over frames under the pixel-level criterion, sweeping the box score
/// threshold.
pub fn pixel_level_roc(frames: &[PixelFrame]) -> Result<RocCurve> {
    let mut scored = Vec::with_capacity(frames.len());
    for f in frames {
        let s = if f.abnormal {
            detection_threshold(require_mask(f)?, &f.detections)
        } else {
            f.detections
                .iter()
                .map(|d| d.score)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        scored.push((s, f.abnormal));
    }
    roc(&scored)
}
