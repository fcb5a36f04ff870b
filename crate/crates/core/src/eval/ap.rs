//! Average precision with the PASCAL VOC all-points interpolation.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// AP of a ranking (best first). `total_positives` may exceed the positives
/// present in `ranked` when some were never retrieved.
pub fn average_precision(ranked: &[bool], total_positives: usize) -> Result<f64> {
    let retrieved = ranked.iter().filter(|&&p| p).count();
    if total_positives == 0 || retrieved > total_positives {
        return Err(Error::invalid("average precision needs positives"));
    }
    let mut recall = Vec::with_capacity(ranked.len());
    let mut precision = Vec::with_capacity(ranked.len());
    let mut tp = 0usize;
    for (i, &p) in ranked.iter().enumerate() {
        if p {
            tp += 1;
        }
        recall.push(tp as f64 / total_positives as f64);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    // Precision envelope: best precision at any recall >= r.
    for i in (0..precision.len().saturating_sub(1)).rev() {
        if precision[i + 1] > precision[i] {
            precision[i] = precision[i + 1];
        }
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        if *r > prev_recall {
            ap += (r - prev_recall) * p;
            prev_recall = *r;
        }
    }
    Ok(ap)
}

/// AP of `(score, is_positive)` pairs ranked by descending score. Equal
/// scores keep their input order.
pub fn average_precision_scored(scored: &[(f64, bool)]) -> Result<f64> {
    let mut sorted = scored.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let ranked: Vec<bool> = sorted.iter().map(|s| s.1).collect();
    let positives = ranked.iter().filter(|&&p| p).count();
    average_precision(&ranked, positives)
}

pub fn mean_average_precision(aps: &[f64]) -> Result<f64> {
    if aps.is_empty() {
        return Err(Error::Empty("no AP values"));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}
