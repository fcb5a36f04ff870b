//! Unseen-concept recounting evaluation.
//!
//! At an anomaly threshold `t`, a region's predicted unseen categories are
//! its candidates (classification score >= 0.1) whose concept anomaly score
//! is at least `t`. A positive region (one with annotated unseen
//! categories) is a true positive when the prediction agrees with its
//! annotation; a negative region is a false positive when anything is
//! predicted. Sweeping `t` traces TPR against FPR.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::roc::{RocCurve, RocPoint};
use crate::recounting::RecountRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementMode {
    /// Prediction and annotation share at least one category.
    #[default]
    Intersect,
    /// Prediction equals the annotated unseen set.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RecountEvalRegion {
    /// `(category, concept anomaly score)` for every candidate category.
    pub candidates: Vec<(String, f64)>,
    /// Annotated unseen categories; empty for negatives.
    pub truth: Vec<String>,
}

impl RecountEvalRegion {
    pub fn is_positive(&self) -> bool {
        !self.truth.is_empty()
    }

    pub fn predicted(&self, threshold: f64) -> BTreeSet<&str> {
        self.candidates
            .iter()
            .filter(|(_, s)| *s >= threshold)
            .map(|(c, _)| c.as_str())
            .collect()
    }

    fn agrees(&self, threshold: f64, mode: AgreementMode) -> bool {
        let predicted = self.predicted(threshold);
        match mode {
            AgreementMode::Intersect => self.truth.iter().any(|t| predicted.contains(t.as_str())),
            AgreementMode::Exact => {
                let truth: BTreeSet<&str> = self.truth.iter().map(String::as_str).collect();
                predicted == truth
            }
        }
    }

    /// Builds the evaluation view of one task of a multi-mode recount record.
    pub fn from_record(record: &RecountRecord, task: &str, truth: Vec<String>) -> Result<Self> {
        let t = record
            .tasks
            .iter()
            .find(|t| t.task == task)
            .ok_or_else(|| Error::UnknownTask(task.into()))?;
        let candidates = t.candidates.as_ref().ok_or_else(|| {
            Error::invalid("recounting evaluation needs multi-category recount records")
        })?;
        Ok(RecountEvalRegion {
            candidates: candidates
                .iter()
                .map(|c| (c.category.clone(), c.anomaly_score))
                .collect(),
            truth,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positives: usize,
    pub false_positives: usize,
    pub positives: usize,
    pub negatives: usize,
}

impl Confusion {
    pub fn tpr(&self) -> f64 {
        self.true_positives as f64 / self.positives as f64
    }

    pub fn fpr(&self) -> f64 {
        self.false_positives as f64 / self.negatives as f64
    }
}

pub fn confusion_at(regions: &[RecountEvalRegion], threshold: f64, mode: AgreementMode) -> Confusion {
    let mut c = Confusion {
        true_positives: 0,
        false_positives: 0,
        positives: 0,
        negatives: 0,
    };
    for r in regions {
        if r.is_positive() {
            c.positives += 1;
            if r.agrees(threshold, mode) {
                c.true_positives += 1;
            }
        } else {
            c.negatives += 1;
            if !r.predicted(threshold).is_empty() {
                c.false_positives += 1;
            }
        }
    }
    c
}

/// AUC of TPR against FPR over every distinct candidate anomaly score. The
/// curve starts at (0, 0) and is closed at (1, 1).
pub fn recounting_eval(regions: &[RecountEvalRegion], mode: AgreementMode) -> Result<RocCurve> {
    let positives = regions.iter().filter(|r| r.is_positive()).count();
    if positives == 0 || positives == regions.len() {
        return Err(Error::invalid(
            "recounting evaluation needs at least one positive and one negative region",
        ));
    }
    let mut thresholds: Vec<f64> = regions
        .iter()
        .flat_map(|r| r.candidates.iter().map(|(_, s)| *s))
        .collect();
    if thresholds.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN concept anomaly score"));
    }
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();

    let mut points = Vec::with_capacity(thresholds.len() + 2);
    points.push(RocPoint {
        threshold: f64::INFINITY,
        tpr: 0.0,
        fpr: 0.0,
    });
    for &t in &thresholds {
        let c = confusion_at(regions, t, mode);
        points.push(RocPoint {
            threshold: t,
            tpr: c.tpr(),
            fpr: c.fpr(),
        });
    }
    let last = points[points.len() - 1];
    if last.tpr < 1.0 || last.fpr < 1.0 {
        points.push(RocPoint {
            threshold: f64::NEG_INFINITY,
            tpr: 1.0,
            fpr: 1.0,
        });
    }
    Ok(RocCurve::from_points(points))
}
