//! Library forms of the train / detect / recount / eval commands.

use std::collections::BTreeMap;

use recount_core::eval::{
    average_precision_scored, frame_level_roc, frame_truth, pixel_frames, pixel_level_roc, recounting_eval,
    AgreementMode, FrameAggregation, RecountEvalRegion, RocCurve,
};
use recount_core::grid::{BankConfig, GridBank};
use recount_core::novelty::DetectorConfig;
use recount_core::pack::FeaturePack;
use recount_core::recounting::{RecountMode, RecountModel, RecountRecord};

use crate::error::{Error, Result};
use crate::model::TrainedModel;
use crate::report::{CurveSummary, Detection, EvalReport, TaskCurve, REPORT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub rows: usize,
    pub cols: usize,
    pub bank: BankConfig,
}

impl TrainOptions {
    pub fn new(detector: DetectorConfig, seed: u64) -> Self {
        TrainOptions {
            rows: recount_core::grid::DEFAULT_ROWS,
            cols: recount_core::grid::DEFAULT_COLS,
            bank: BankConfig::new(detector, seed),
        }
    }
}

/// Records used for training: all of them, minus any labeled abnormal.
pub fn training_records(pack: &FeaturePack) -> Vec<usize> {
    let abnormal: Vec<bool> = match &pack.labels {
        Some(l) => l
            .regions_by_record(pack.len())
            .iter()
            .map(|r| r.and_then(|r| r.abnormal) == Some(true))
            .collect(),
        None => vec![false; pack.len()],
    };
    let keep: Vec<usize> = (0..pack.len()).filter(|&i| !abnormal[i]).collect();
    if keep.len() < pack.len() {
        log::info!("skipping {} training records labeled abnormal", pack.len() - keep.len());
    }
    keep
}

pub fn train(pack: &FeaturePack, opts: &TrainOptions) -> Result<TrainedModel> {
    let normal = pack.subset(&training_records(pack));
    if normal.is_empty() {
        return Err(Error::Core(recount_core::Error::Empty("normal training records")));
    }
    let bank = GridBank::fit_pack(opts.rows, opts.cols, &normal, opts.bank)?;
    if bank.fitted_cells() < bank.cells.len() {
        log::warn!(
            "{} of {} grid cells have too few training regions and stay untrained",
            bank.cells.len() - bank.fitted_cells(),
            bank.cells.len()
        );
    }
    let recount = RecountModel::fit_pack(&normal)?;
    Ok(TrainedModel {
        bank,
        recount,
        tasks: normal.manifest.tasks.clone(),
    })
}

fn check_compatible(model: &TrainedModel, pack: &FeaturePack) -> Result<()> {
    if pack.feature_dim() != model.bank.input_dim {
        return Err(recount_core::Error::DimMismatch {
            expected: model.bank.input_dim,
            actual: pack.feature_dim(),
        }
        .into());
    }
    Ok(())
}

/// Record indices in canonical output order: video, frame, record.
pub fn canonical_order(pack: &FeaturePack) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pack.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&pack.records[a], &pack.records[b]);
        (ra.video_id.as_str(), ra.frame_index, a).cmp(&(rb.video_id.as_str(), rb.frame_index, b))
    });
    order
}

pub fn detect(model: &TrainedModel, pack: &FeaturePack, threshold: Option<f64>) -> Result<Vec<Detection>> {
    check_compatible(model, pack)?;
    let scores = model.bank.score_pack(pack)?;
    Ok(canonical_order(pack)
        .into_iter()
        .map(|i| {
            let r = &pack.records[i];
            let s = scores[i];
            Detection {
                record: i,
                video_id: r.video_id.clone(),
                frame_index: r.frame_index,
                bbox: r.bbox,
                score: s.score,
                cell: [s.row, s.col],
                untrained_cell: s.untrained_cell,
                detected: threshold.map(|t| s.score >= t),
            }
        })
        .collect())
}

/// Recounts every region, or only those scoring at least `threshold`.
pub fn recount(
    model: &TrainedModel,
    pack: &FeaturePack,
    threshold: Option<f64>,
    mode: RecountMode,
) -> Result<Vec<RecountRecord>> {
    let detections = detect(model, pack, threshold)?;
    detections
        .iter()
        .filter(|d| d.detected != Some(false))
        .map(|d| {
            model
                .recount
                .recount_event(pack, d.record, d.score, d.untrained_cell, mode)
                .map_err(Error::from)
        })
        .collect()
}

/// Per-record score vector of a detection list; records without a
/// detection get `-inf`.
pub fn record_scores(pack: &FeaturePack, detections: &[Detection]) -> Result<Vec<f64>> {
    let mut scores = vec![f64::NEG_INFINITY; pack.len()];
    for d in detections {
        let r = pack.records.get(d.record).ok_or_else(|| {
            Error::Format(format!(
                "detection refers to record {} but the pack has {}",
                d.record,
                pack.len()
            ))
        })?;
        if r.video_id != d.video_id || r.frame_index != d.frame_index {
            return Err(Error::Format(format!(
                "detection for record {} names {}#{}, the pack has {}#{}",
                d.record, d.video_id, d.frame_index, r.video_id, r.frame_index
            )));
        }
        scores[d.record] = d.score;
    }
    Ok(scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalOptions {
    pub frame_level: bool,
    pub pixel_level: bool,
    pub unseen_ap: bool,
    pub aggregation: FrameAggregation,
    pub agreement: AgreementMode,
}

/// Report plus the full curves behind it, in report order.
pub struct Evaluation {
    pub report: EvalReport,
    pub curves: Vec<(String, RocCurve)>,
}

fn count(truth: impl Iterator<Item = bool>) -> (usize, usize) {
    truth.fold((0, 0), |(p, n), t| if t { (p + 1, n) } else { (p, n + 1) })
}

/// Recounting evaluation regions for one task. Truth is the annotated unseen
/// categories of each recounted record.
pub fn recount_eval_regions(gt: &FeaturePack, records: &[RecountRecord], task: &str) -> Result<Vec<RecountEvalRegion>> {
    let labels = gt
        .labels
        .as_ref()
        .ok_or_else(|| Error::Usage("recounting evaluation needs ground-truth labels".into()))?;
    let by_record = labels.regions_by_record(gt.len());
    records
        .iter()
        .map(|r| {
            if r.record >= gt.len() {
                return Err(Error::Format(format!(
                    "recount record {} is outside the ground-truth pack",
                    r.record
                )));
            }
            let truth = by_record[r.record]
                .and_then(|l| l.unseen.get(task).cloned())
                .unwrap_or_default();
            Ok(RecountEvalRegion::from_record(r, task, truth)?)
        })
        .collect()
}

pub fn evaluate(
    gt: &FeaturePack,
    detections: &[Detection],
    recounts: Option<&[RecountRecord]>,
    opts: &EvalOptions,
) -> Result<Evaluation> {
    if gt.labels.is_none() {
        return Err(Error::Usage("ground-truth pack has no labels.jsonl".into()));
    }
    let scores = record_scores(gt, detections)?;
    let mut report = EvalReport {
        version: REPORT_VERSION,
        detections: detections.len(),
        frame_level: None,
        pixel_level: None,
        unseen_ap: None,
        recounting: Vec::new(),
    };
    let mut curves = Vec::new();

    if opts.frame_level {
        let curve = frame_level_roc(gt, &scores, opts.aggregation)?;
        let (p, n) = count(frame_truth(gt)?.into_iter().map(|(_, t)| t));
        report.frame_level = Some(CurveSummary::new(&curve, p, n));
        curves.push(("frame-level".to_string(), curve));
    }
    if opts.pixel_level {
        let frames = pixel_frames(gt, &scores)?;
        let curve = pixel_level_roc(&frames)?;
        let (p, n) = count(frames.iter().map(|f| f.abnormal));
        report.pixel_level = Some(CurveSummary::new(&curve, p, n));
        curves.push(("pixel-level".to_string(), curve));
    }
    if opts.unseen_ap {
        let labels = gt.labels.as_ref().expect("checked above");
        let by_record = labels.regions_by_record(gt.len());
        let scored: Vec<(f64, bool)> = scores
            .iter()
            .zip(&by_record)
            .map(|(&s, l)| (s, l.is_some_and(|l| l.has_unseen())))
            .collect();
        report.unseen_ap = Some(average_precision_scored(&scored)?);
    }
    if let Some(records) = recounts {
        let mut tasks: BTreeMap<usize, &str> = BTreeMap::new();
        for r in records.iter().take(1) {
            for t in &r.tasks {
                let i = gt
                    .manifest
                    .task_index(&t.task)
                    .ok_or_else(|| recount_core::Error::UnknownTask(t.task.clone()))?;
                tasks.insert(i, &t.task);
            }
        }
        for task in tasks.into_values() {
            let regions = recount_eval_regions(gt, records, task)?;
            let curve = recounting_eval(&regions, opts.agreement)?;
            let (p, n) = count(regions.iter().map(RecountEvalRegion::is_positive));
            report.recounting.push(TaskCurve {
                task: task.to_string(),
                agreement: opts.agreement,
                curve: CurveSummary::new(&curve, p, n),
            });
            curves.push((format!("recounting/{task}"), curve));
        }
    }
    Ok(Evaluation { report, curves })
}
