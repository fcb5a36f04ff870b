//! Frame-level score aggregation.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::roc::{roc, RocCurve};
use crate::pack::{FeaturePack, FrameKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameAggregation {
    #[default]
    Max,
    Mean,
}

/// Score per frame, in the order of `frames`. Frames without detections get
/// `-inf` and so never cross a finite threshold.
pub fn frame_scores(frames: &[FrameKey], detections: &[(FrameKey, f64)], aggregation: FrameAggregation) -> Vec<f64> {
    let mut acc: BTreeMap<&FrameKey, (f64, f64, usize)> = BTreeMap::new();
    for (key, s) in detections {
        let e = acc.entry(key).or_insert((f64::NEG_INFINITY, 0.0, 0));
        e.0 = e.0.max(*s);
        e.1 += s;
        e.2 += 1;
    }
    frames
        .iter()
        .map(|f| match acc.get(f) {
            None => f64::NEG_INFINITY,
            Some(&(max, sum, n)) => match aggregation {
                FrameAggregation::Max => max,
                FrameAggregation::Mean => sum / n as f64,
            },
        })
        .collect()
}

/// Ground truth per frame of a pack, in `pack.frames()` order. A frame
/// label wins; otherwise a frame is abnormal when any of its regions is.
pub fn frame_truth(pack: &FeaturePack) -> Result<Vec<(FrameKey, bool)>> {
    let labels = pack
        .labels
        .as_ref()
        .ok_or_else(|| Error::validation(None, "pack has no ground truth"))?;
    let mut from_regions: BTreeMap<FrameKey, bool> = BTreeMap::new();
    for r in &labels.regions {
        if let (Some(a), Some(rec)) = (r.abnormal, pack.records.get(r.record)) {
            *from_regions
                .entry(FrameKey::new(rec.video_id.clone(), rec.frame_index))
                .or_default() |= a;
        }
    }
    pack.frames()
        .into_iter()
        .map(|key| {
            let truth = match labels.frame(&key) {
                Some(f) => f.abnormal,
                None => *from_regions.get(&key).ok_or_else(|| {
                    Error::validation(
                        None,
                        alloc::format!("no ground truth for frame {} of {}", key.frame_index, key.video_id),
                    )
                })?,
            };
            Ok((key, truth))
        })
        .collect()
}

/// Frame-level ROC of per-record scores (`scores[i]` belongs to record `i`).
pub fn frame_level_roc(pack: &FeaturePack, scores: &[f64], aggregation: FrameAggregation) -> Result<RocCurve> {
    Error::check_dim(pack.len(), scores.len())?;
    let truth = frame_truth(pack)?;
    let keys: Vec<FrameKey> = truth.iter().map(|(k, _)| k.clone()).collect();
    let detections: Vec<(FrameKey, f64)> = pack
        .records
        .iter()
        .zip(scores)
        .map(|(r, &s)| (FrameKey::new(r.video_id.clone(), r.frame_index), s))
        .collect();
    let per_frame = frame_scores(&keys, &detections, aggregation);
    let scored: Vec<(f64, bool)> = per_frame.into_iter().zip(truth.iter().map(|t| t.1)).collect();
    roc(&scored)
}
