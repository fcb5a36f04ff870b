//! ROC curves, trapezoidal AUC and equal error rate.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// Points run from threshold `+inf` at (0, 0) down to the lowest threshold
/// at (1, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub eer: f64,
    /// Threshold of the curve point at or just past the equal-error point.
    pub eer_threshold: f64,
}

impl RocCurve {
    /// Builds the curve summary from points ordered by decreasing threshold.
    pub fn from_points(points: Vec<RocPoint>) -> Self {
        let auc = trapezoid_auc(&points);
        let (eer, eer_threshold) = equal_error_rate(&points);
        RocCurve {
            points,
            auc,
            eer,
            eer_threshold,
        }
    }
}

/// A region is predicted positive when `score >= threshold`. Every distinct
/// score is a threshold; tied scores enter the curve together.
pub fn roc(scored: &[(f64, bool)]) -> Result<RocCurve> {
    if scored.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let pos = scored.iter().filter(|(_, p)| *p).count();
    let neg = scored.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("ROC needs at least one positive and one negative"));
    }
    let mut sorted = scored.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = Vec::with_capacity(sorted.len() + 1);
    points.push(RocPoint {
        threshold: f64::INFINITY,
        tpr: 0.0,
        fpr: 0.0,
    });
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == t {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: t,
            tpr: tp as f64 / pos as f64,
            fpr: fp as f64 / neg as f64,
        });
    }
    Ok(RocCurve::from_points(points))
}

pub fn trapezoid_auc(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) / 2.0)
        .sum()
}

/// Rate where `FPR = 1 - TPR`, linearly interpolated on the first segment
/// that crosses it.
pub fn equal_error_rate(points: &[RocPoint]) -> (f64, f64) {
    let gap = |p: &RocPoint| p.fpr - (1.0 - p.tpr);
    for w in points.windows(2) {
        let (a, b) = (gap(&w[0]), gap(&w[1]));
        if a <= 0.0 && b >= 0.0 {
            if b == a {
                return (w[0].fpr, w[0].threshold);
            }
            let s = -a / (b - a);
            let fpr = w[0].fpr + s * (w[1].fpr - w[0].fpr);
            return (fpr, w[1].threshold);
        }
    }
    let last = points.last().map_or((1.0, f64::NEG_INFINITY), |p| (p.fpr, p.threshold));
    last
}
