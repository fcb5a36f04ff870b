//! Detection lines, evaluation reports and their renderings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use recount_core::eval::{AgreementMode, RocCurve};
use recount_core::pack::BBox;

pub const REPORT_VERSION: u32 = 1;

/// One scored region, as written by `detect`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detection {
    pub record: usize,
    pub video_id: String,
    pub frame_index: u64,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score: f64,
    pub cell: [usize; 2],
    #[serde(default)]
    pub untrained_cell: bool,
    /// Present when a threshold was given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detected: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSummary {
    pub auc: f64,
    pub eer: f64,
    pub eer_threshold: f64,
    pub positives: usize,
    pub negatives: usize,
    pub points: usize,
}

impl CurveSummary {
    pub fn new(curve: &RocCurve, positives: usize, negatives: usize) -> Self {
        CurveSummary {
            auc: curve.auc,
            eer: curve.eer,
            eer_threshold: curve.eer_threshold,
            positives,
            negatives,
            points: curve.points.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskCurve {
    pub task: String,
    pub agreement: AgreementMode,
    pub curve: CurveSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub version: u32,
    pub detections: usize,
    #[serde(default)]
    pub frame_level: Option<CurveSummary>,
    #[serde(default)]
    pub pixel_level: Option<CurveSummary>,
    /// Average precision of regions showing unseen categories, ranked by
    /// detection score.
    #[serde(default)]
    pub unseen_ap: Option<f64>,
    #[serde(default)]
    pub recounting: Vec<TaskCurve>,
}

/// Fixed-width text table of a report.
pub fn render_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24} {:>8} {:>8} {:>10} {:>10}",
        "criterion", "AUC", "EER", "positives", "negatives"
    );
    let mut row = |name: &str, c: &CurveSummary| {
        let _ = writeln!(
            out,
            "{:<24} {:>8.4} {:>8.4} {:>10} {:>10}",
            name, c.auc, c.eer, c.positives, c.negatives
        );
    };
    if let Some(c) = &report.frame_level {
        row("frame-level", c);
    }
    if let Some(c) = &report.pixel_level {
        row("pixel-level", c);
    }
    for t in &report.recounting {
        row(&format!("recounting/{}", t.task), &t.curve);
    }
    if let Some(ap) = report.unseen_ap {
        let _ = writeln!(out, "{:<24} {:>8.4}", "unseen AP", ap);
    }
    out
}

/// `curve,threshold,fpr,tpr` rows for every named curve.
pub fn roc_csv(curves: &[(String, &RocCurve)]) -> String {
    let mut out = String::from("curve,threshold,fpr,tpr\n");
    for (name, curve) in curves {
        for p in &curve.points {
            let _ = writeln!(out, "{name},{},{},{}", p.threshold, p.fpr, p.tpr);
        }
    }
    out
}
