//! Recounting: explaining a detected region by its visual concepts.
//!
//! For each concept task the region's category is predicted by argmax over
//! its classification scores. How unusual that concept is in the
//! environment comes from a 1-D Gaussian KDE over the training-set scores
//! of the category: the concept anomaly score is the reciprocal of the
//! density at the region's classification score.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{sqrt, std_normal_pdf};
use crate::novelty::kde::{floor_bandwidths, scott_factor};
use crate::pack::{BBox, ConceptTask, FeaturePack};

/// Categories scoring below this are never predicted.
pub const MIN_CLASSIFICATION_SCORE: f64 = 0.1;

/// Densities below this are raised to it before taking the reciprocal.
pub const CONCEPT_DENSITY_FLOOR: f64 = 1e-12;

/// 1-D Gaussian KDE over one category's training scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryDensity {
    pub samples: Vec<f64>,
    pub bandwidth: f64,
}

impl CategoryDensity {
    /// Scott bandwidth `sigma * n^(-1/5)`, floored like the feature-space
    /// KDE. Fewer than two samples leave `sigma = 0`, so the floor applies.
    pub fn fit(samples: Vec<f64>) -> Self {
        let n = samples.len();
        let std = if n >= 2 {
            let mean = samples.iter().sum::<f64>() / n as f64;
            sqrt(samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1) as f64)
        } else {
            0.0
        };
        let h = std * scott_factor(n.max(1), 1);
        let bandwidth = floor_bandwidths(alloc::vec![h], &[std])[0];
        CategoryDensity { samples, bandwidth }
    }

    /// Zero when there are no samples.
    pub fn density(&self, s: f64) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let h = self.bandwidth;
        let sum: f64 = self.samples.iter().map(|x| std_normal_pdf((s - x) / h)).sum();
        sum / (self.samples.len() as f64 * h)
    }

    pub fn anomaly(&self, s: f64) -> f64 {
        1.0 / self.density(s).max(CONCEPT_DENSITY_FLOOR)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDensities {
    pub task: String,
    pub categories: Vec<String>,
    pub densities: Vec<CategoryDensity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecountModel {
    pub tasks: Vec<TaskDensities>,
}

/// Index of the highest score, ties to the lowest index; `None` when every
/// score is below [`MIN_CLASSIFICATION_SCORE`].
pub fn predict_category(scores: &[f64]) -> Result<Option<usize>> {
    if scores.is_empty() {
        return Err(Error::Empty("concept task has no categories"));
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok((scores[best] >= MIN_CLASSIFICATION_SCORE).then_some(best))
}

/// [`predict_category`] for every task.
pub fn predict_categories(scores: &[Vec<f64>]) -> Result<Vec<Option<usize>>> {
    scores.iter().map(|s| predict_category(s)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptScore {
    pub category: String,
    pub cls_score: f64,
    pub anomaly_score: f64,
}

/// Recounting output for one task. `category` is `None` when nothing
/// scored at least [`MIN_CLASSIFICATION_SCORE`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecount {
    pub task: String,
    pub category: Option<String>,
    pub cls_score: Option<f64>,
    pub anomaly_score: Option<f64>,
    /// Every category passing the classification and anomaly thresholds
    /// (multi-category mode only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<ConceptScore>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecountRecord {
    pub record: usize,
    pub video_id: String,
    pub frame_index: u64,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub detection_score: f64,
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub untrained_cell: bool,
    pub tasks: Vec<TaskRecount>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RecountMode {
    /// Argmax category per task.
    #[default]
    Single,
    /// Also list every category with classification score at least 0.1 and
    /// concept anomaly at least `min_anomaly`.
    Multi { min_anomaly: f64 },
}

impl RecountModel {
    /// Fits one density per (task, category) on `scores[t]`, the rows of
    /// training classification scores for task `t`.
    pub fn fit<'a, I>(tasks: &[ConceptTask], scores: &[I]) -> Result<Self>
    where
        I: Clone + IntoIterator<Item = &'a [f64]>,
    {
        Error::check_dim(tasks.len(), scores.len())?;
        let mut out = Vec::with_capacity(tasks.len());
        for (task, rows) in tasks.iter().zip(scores) {
            let k = task.score_dim();
            let mut columns: Vec<Vec<f64>> = alloc::vec![Vec::new(); k];
            for row in rows.clone() {
                Error::check_dim(k, row.len())?;
                for (col, &v) in columns.iter_mut().zip(row) {
                    col.push(v);
                }
            }
            if columns.iter().any(|c| c.len() < 2) {
                log::warn!(
                    "task {:?}: fewer than two training scores, bandwidth floored",
                    task.name
                );
            }
            out.push(TaskDensities {
                task: task.name.clone(),
                categories: task.categories.clone(),
                densities: columns.into_iter().map(CategoryDensity::fit).collect(),
            });
        }
        Ok(RecountModel { tasks: out })
    }

    pub fn fit_pack(pack: &FeaturePack) -> Result<Self> {
        if pack.is_empty() {
            return Err(Error::Empty("recounting training records"));
        }
        let rows: Vec<Vec<Vec<f64>>> = (0..pack.manifest.tasks.len())
            .map(|t| {
                (0..pack.len())
                    .map(|r| pack.record_scores(r, t).iter().map(|&v| f64::from(v)).collect())
                    .collect()
            })
            .collect();
        let slices: Vec<Vec<&[f64]>> = rows
            .iter()
            .map(|task| task.iter().map(Vec::as_slice).collect())
            .collect();
        Self::fit(&pack.manifest.tasks, &slices)
    }

    fn task(&self, name: &str) -> Result<(usize, &TaskDensities)> {
        self.tasks
            .iter()
            .enumerate()
            .find(|(_, t)| t.task == name)
            .ok_or_else(|| Error::UnknownTask(name.into()))
    }

    pub fn density(&self, task: &str, category: &str, cls_score: f64) -> Result<f64> {
        let (_, t) = self.task(task)?;
        let c = t
            .categories
            .iter()
            .position(|c| c == category)
            .ok_or_else(|| Error::UnknownCategory {
                task: task.into(),
                category: category.into(),
            })?;
        Ok(t.densities[c].density(cls_score))
    }

    /// `1 / max(p(cls_score), 1e-12)` under the category's training density.
    pub fn concept_anomaly(&self, task: &str, category: &str, cls_score: f64) -> Result<f64> {
        Ok(1.0 / self.density(task, category, cls_score)?.max(CONCEPT_DENSITY_FLOOR))
    }

    /// Predicts a category per task and scores each prediction. `scores`
    /// holds the region's classification scores per task, in model order.
    pub fn recount_tasks(&self, scores: &[Vec<f64>], mode: RecountMode) -> Result<Vec<TaskRecount>> {
        Error::check_dim(self.tasks.len(), scores.len())?;
        let mut out = Vec::with_capacity(self.tasks.len());
        for (t, s) in self.tasks.iter().zip(scores) {
            Error::check_dim(t.categories.len(), s.len())?;
            let predicted = predict_category(s)?;
            let (category, cls_score, anomaly_score) = match predicted {
                Some(c) => (
                    Some(t.categories[c].clone()),
                    Some(s[c]),
                    Some(t.densities[c].anomaly(s[c])),
                ),
                None => (None, None, None),
            };
            let candidates = match mode {
                RecountMode::Single => None,
                RecountMode::Multi { min_anomaly } => Some(
                    s.iter()
                        .enumerate()
                        .filter(|(_, &v)| v >= MIN_CLASSIFICATION_SCORE)
                        .map(|(c, &v)| ConceptScore {
                            category: t.categories[c].clone(),
                            cls_score: v,
                            anomaly_score: t.densities[c].anomaly(v),
                        })
                        .filter(|cs| cs.anomaly_score >= min_anomaly)
                        .collect(),
                ),
            };
            out.push(TaskRecount {
                task: t.task.clone(),
                category,
                cls_score,
                anomaly_score,
                candidates,
            });
        }
        Ok(out)
    }

    /// Recounts one record of a pack whose tasks match the model's.
    pub fn recount_event(
        &self,
        pack: &FeaturePack,
        record: usize,
        detection_score: f64,
        untrained_cell: bool,
        mode: RecountMode,
    ) -> Result<RecountRecord> {
        let mut scores = Vec::with_capacity(self.tasks.len());
        for t in &self.tasks {
            let ti = pack
                .manifest
                .task_index(&t.task)
                .ok_or_else(|| Error::UnknownTask(t.task.clone()))?;
            if pack.manifest.tasks[ti].categories != t.categories {
                return Err(Error::invalid(alloc::format!(
                    "categories of task {:?} differ between pack and model",
                    t.task
                )));
            }
            scores.push(pack.record_scores(record, ti).iter().map(|&v| f64::from(v)).collect());
        }
        let r = &pack.records[record];
        Ok(RecountRecord {
            record,
            video_id: r.video_id.clone(),
            frame_index: r.frame_index,
            bbox: r.bbox,
            detection_score,
            untrained_cell,
            tasks: self.recount_tasks(&scores, mode)?,
        })
    }
}
