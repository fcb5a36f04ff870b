//! In-memory feature packs: regions, semantic feature vectors, per-task
//! classification scores and optional ground truth.
//!
//! The on-disk layout is handled by the `recount` crate; this module owns
//! the data model and every validation rule, so a pack built in memory (for
//! example by [`crate::synth`]) is checked exactly like one read from disk.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const FORMAT_VERSION: u32 = 1;

/// Scores within this distance outside `[0, 1]` are clamped on write.
pub const SCORE_CLAMP_SLACK: f32 = 1e-6;

/// Axis-aligned box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.w > 0.0 && self.h > 0.0)
    }

    pub fn within(&self, width: f64, height: f64) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.x + self.w <= width && self.y + self.h <= height
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoInfo {
    pub video_id: String,
    pub width: u32,
    pub height: u32,
}

/// One concept task (object, action, attribute, or user defined) and its
/// ordered category list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptTask {
    pub name: String,
    pub categories: Vec<String>,
}

impl ConceptTask {
    pub fn new(name: impl Into<String>, categories: &[&str]) -> Self {
        ConceptTask {
            name: name.into(),
            categories: categories.iter().map(|c| String::from(*c)).collect(),
        }
    }

    pub fn score_dim(&self) -> usize {
        self.categories.len()
    }

    pub fn category_index(&self, name: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub feature_dim: usize,
    pub videos: Vec<VideoInfo>,
    pub tasks: Vec<ConceptTask>,
    pub record_count: usize,
}

impl Manifest {
    pub fn video(&self, id: &str) -> Option<&VideoInfo> {
        self.videos.iter().find(|v| v.video_id == id)
    }

    pub fn task_index(&self, name: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRecord {
    pub video_id: String,
    pub frame_index: u64,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub feature_offset: usize,
    pub score_offsets: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FrameKey {
    pub video_id: String,
    pub frame_index: u64,
}

impl FrameKey {
    pub fn new(video_id: impl Into<String>, frame_index: u64) -> Self {
        FrameKey {
            video_id: video_id.into(),
            frame_index,
        }
    }
}

/// Run-length encoded binary mask. `runs` holds `[start, length]` pairs over
/// row-major pixel indices of the set pixels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub width: u32,
    pub height: u32,
    pub runs: Vec<[u64; 2]>,
}

impl RleMask {
    pub fn from_bitmap(width: u32, height: u32, bits: &[bool]) -> Self {
        let mut runs = Vec::new();
        let mut i = 0;
        while i < bits.len() {
            if bits[i] {
                let start = i;
                while i < bits.len() && bits[i] {
                    i += 1;
                }
                runs.push([start as u64, (i - start) as u64]);
            } else {
                i += 1;
            }
        }
        RleMask {
            width,
            height,
            runs,
        }
    }

    pub fn to_bitmap(&self) -> Vec<bool> {
        let mut bits = alloc::vec![false; self.width as usize * self.height as usize];
        for &[start, len] in &self.runs {
            for b in &mut bits[start as usize..(start + len) as usize] {
                *b = true;
            }
        }
        bits
    }

    pub fn pixel_count(&self) -> u64 {
        self.runs.iter().map(|r| r[1]).sum()
    }

    fn check(&self) -> core::result::Result<(), String> {
        let total = u64::from(self.width) * u64::from(self.height);
        let mut last_end = 0u64;
        for &[start, len] in &self.runs {
            if len == 0 {
                return Err(String::from("mask has an empty run"));
            }
            if start < last_end {
                return Err(String::from("mask runs overlap or are unsorted"));
            }
            last_end = start + len;
            if last_end > total {
                return Err(format!("mask run ends at {last_end}, beyond {total} pixels"));
            }
        }
        Ok(())
    }
}

/// Per-region ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RegionLabel {
    pub record: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abnormal: Option<bool>,
    /// Annotated categories, by task name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub categories: BTreeMap<String, Vec<String>>,
    /// The subset of annotated categories that are unseen in training, by
    /// task name. Empty means the region is a negative for unseen-concept
    /// evaluation.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub unseen: BTreeMap<String, Vec<String>>,
}

impl RegionLabel {
    pub fn has_unseen(&self) -> bool {
        self.unseen.values().any(|v| !v.is_empty())
    }
}

/// Per-frame ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameLabel {
    pub video_id: String,
    pub frame_index: u64,
    pub abnormal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<RleMask>,
}

impl FrameLabel {
    pub fn key(&self) -> FrameKey {
        FrameKey::new(self.video_id.clone(), self.frame_index)
    }
}

/// One line of the label file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelEntry {
    Region(RegionLabel),
    Frame(FrameLabel),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Labels {
    pub regions: Vec<RegionLabel>,
    pub frames: Vec<FrameLabel>,
}

impl Labels {
    pub fn from_entries(entries: impl IntoIterator<Item = LabelEntry>) -> Self {
        let mut labels = Labels::default();
        for e in entries {
            match e {
                LabelEntry::Region(r) => labels.regions.push(r),
                LabelEntry::Frame(f) => labels.frames.push(f),
            }
        }
        labels
    }

    pub fn entries(&self) -> impl Iterator<Item = LabelEntry> + '_ {
        self.frames
            .iter()
            .cloned()
            .map(LabelEntry::Frame)
            .chain(self.regions.iter().cloned().map(LabelEntry::Region))
    }

    pub fn region(&self, record: usize) -> Option<&RegionLabel> {
        self.regions.iter().find(|r| r.record == record)
    }

    /// Region labels indexed by record, `None` where a record is unlabeled.
    pub fn regions_by_record(&self, n: usize) -> Vec<Option<&RegionLabel>> {
        let mut out = alloc::vec![None; n];
        for r in &self.regions {
            if r.record < n {
                out[r.record] = Some(r);
            }
        }
        out
    }

    pub fn frame(&self, key: &FrameKey) -> Option<&FrameLabel> {
        self.frames
            .iter()
            .find(|f| f.video_id == key.video_id && f.frame_index == key.frame_index)
    }
}

/// Non-fatal findings from validation.
#[derive(Debug, Clone, PartialEq)]
pub enum PackWarning {
    DuplicateRecord { first: usize, duplicate: usize },
}

impl core::fmt::Display for PackWarning {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            PackWarning::DuplicateRecord { first, duplicate } => {
                write!(f, "record {duplicate} duplicates record {first}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePack {
    pub manifest: Manifest,
    pub records: Vec<RegionRecord>,
    /// `n x feature_dim`.
    pub features: Matrix<f32>,
    /// One `n x score_dim` matrix per task, in manifest task order.
    pub scores: Vec<Matrix<f32>>,
    pub labels: Option<Labels>,
}

impl FeaturePack {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.manifest.feature_dim
    }

    pub fn record_features(&self, record: usize) -> &[f32] {
        self.features.row(self.records[record].feature_offset)
    }

    pub fn record_features_f64(&self, record: usize) -> Vec<f64> {
        self.record_features(record)
            .iter()
            .map(|&v| f64::from(v))
            .collect()
    }

    pub fn record_scores(&self, record: usize, task: usize) -> &[f32] {
        self.scores[task].row(self.records[record].score_offsets[task])
    }

    /// Feature rows of the given records as an `f64` matrix.
    pub fn feature_matrix_f64(&self, records: &[usize]) -> Matrix<f64> {
        let mut m = Matrix::zeros(records.len(), self.feature_dim());
        for (row, &r) in records.iter().enumerate() {
            for (dst, &src) in m.row_mut(row).iter_mut().zip(self.record_features(r)) {
                *dst = f64::from(src);
            }
        }
        m
    }

    pub fn frame_size(&self, video_id: &str) -> Option<(u32, u32)> {
        self.manifest.video(video_id).map(|v| (v.width, v.height))
    }

    /// All frames the pack knows about, from records and frame labels,
    /// sorted by video then frame index.
    pub fn frames(&self) -> Vec<FrameKey> {
        let mut set: BTreeSet<FrameKey> = self
            .records
            .iter()
            .map(|r| FrameKey::new(r.video_id.clone(), r.frame_index))
            .collect();
        if let Some(labels) = &self.labels {
            set.extend(labels.frames.iter().map(FrameLabel::key));
        }
        set.into_iter().collect()
    }

    /// Clamps scores lying within [`SCORE_CLAMP_SLACK`] outside `[0, 1]`.
    /// Values further out are left alone for [`FeaturePack::validate`] to
    /// reject.
    pub fn clamp_scores(&mut self) {
        for m in &mut self.scores {
            let (rows, cols) = (m.nrows(), m.ncols());
            for r in 0..rows {
                for c in 0..cols {
                    let v = &mut m[(r, c)];
                    if *v < 0.0 && *v >= -SCORE_CLAMP_SLACK {
                        *v = 0.0;
                    } else if *v > 1.0 && *v <= 1.0 + SCORE_CLAMP_SLACK {
                        *v = 1.0;
                    }
                }
            }
        }
    }

    /// Checks every structural and numeric invariant. Returns the non-fatal
    /// warnings on success.
    pub fn validate(&self) -> Result<Vec<PackWarning>> {
        let m = &self.manifest;
        if m.version != FORMAT_VERSION {
            return Err(Error::validation(
                None,
                format!("unsupported pack version {} (expected {FORMAT_VERSION})", m.version),
            ));
        }
        if m.tasks.is_empty() {
            return Err(Error::validation(None, "pack declares no concept tasks"));
        }
        let mut task_names = BTreeSet::new();
        for t in &m.tasks {
            if !task_names.insert(t.name.as_str()) {
                return Err(Error::validation(None, format!("duplicate task {:?}", t.name)));
            }
            if t.categories.is_empty() {
                return Err(Error::validation(None, format!("task {:?} has no categories", t.name)));
            }
            let mut cats = BTreeSet::new();
            for c in &t.categories {
                if !cats.insert(c.as_str()) {
                    return Err(Error::validation(
                        None,
                        format!("duplicate category {c:?} in task {:?}", t.name),
                    ));
                }
            }
        }
        let mut video_ids = BTreeSet::new();
        for v in &m.videos {
            if !video_ids.insert(v.video_id.as_str()) {
                return Err(Error::validation(None, format!("duplicate video {:?}", v.video_id)));
            }
            if v.width == 0 || v.height == 0 {
                return Err(Error::validation(
                    None,
                    format!("video {:?} has zero frame size", v.video_id),
                ));
            }
        }

        let n = m.record_count;
        if self.records.len() != n {
            return Err(Error::validation(
                None,
                format!("manifest declares {n} records, found {}", self.records.len()),
            ));
        }
        if self.features.nrows() != n || self.features.ncols() != m.feature_dim {
            return Err(Error::validation(
                None,
                format!(
                    "feature matrix is {}x{}, expected {n}x{}",
                    self.features.nrows(),
                    self.features.ncols(),
                    m.feature_dim
                ),
            ));
        }
        if self.scores.len() != m.tasks.len() {
            return Err(Error::validation(
                None,
                format!("{} score matrices for {} tasks", self.scores.len(), m.tasks.len()),
            ));
        }
        for (t, s) in m.tasks.iter().zip(&self.scores) {
            if s.nrows() != n || s.ncols() != t.score_dim() {
                return Err(Error::validation(
                    None,
                    format!(
                        "score matrix for task {:?} is {}x{}, expected {n}x{}",
                        t.name,
                        s.nrows(),
                        s.ncols(),
                        t.score_dim()
                    ),
                ));
            }
        }

        for (i, row) in self.features.iter_rows().enumerate() {
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::validation(
                    Some(i),
                    format!("non-finite feature value {} at dim {j}", row[j]),
                ));
            }
        }
        for (t, s) in m.tasks.iter().zip(&self.scores) {
            for (i, row) in s.iter_rows().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(Error::validation(
                            Some(i),
                            format!("non-finite score {v} for {}/{}", t.name, t.categories[j]),
                        ));
                    }
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::validation(
                            Some(i),
                            format!("score {v} for {}/{} outside [0, 1]", t.name, t.categories[j]),
                        ));
                    }
                }
            }
        }

        for (i, r) in self.records.iter().enumerate() {
            let video = m.video(&r.video_id).ok_or_else(|| {
                Error::validation(Some(i), format!("undeclared video {:?}", r.video_id))
            })?;
            let b = &r.bbox;
            if ![b.x, b.y, b.w, b.h].iter().all(|v| v.is_finite()) {
                return Err(Error::validation(Some(i), "non-finite box coordinate"));
            }
            if b.is_degenerate() {
                return Err(Error::validation(
                    Some(i),
                    format!("degenerate box {}x{}", b.w, b.h),
                ));
            }
            if !b.within(f64::from(video.width), f64::from(video.height)) {
                return Err(Error::validation(
                    Some(i),
                    format!(
                        "box ({}, {}, {}, {}) outside {}x{} frame",
                        b.x, b.y, b.w, b.h, video.width, video.height
                    ),
                ));
            }
            if r.feature_offset >= n {
                return Err(Error::validation(
                    Some(i),
                    format!("feature offset {} >= {n}", r.feature_offset),
                ));
            }
            if r.score_offsets.len() != m.tasks.len() {
                return Err(Error::validation(
                    Some(i),
                    format!("{} score offsets for {} tasks", r.score_offsets.len(), m.tasks.len()),
                ));
            }
            if let Some(o) = r.score_offsets.iter().find(|&&o| o >= n) {
                return Err(Error::validation(Some(i), format!("score offset {o} >= {n}")));
            }
        }

        if let Some(labels) = &self.labels {
            self.validate_labels(labels)?;
        }

        Ok(self.duplicate_warnings())
    }

    fn validate_labels(&self, labels: &Labels) -> Result<()> {
        let n = self.records.len();
        let mut seen = BTreeSet::new();
        for l in &labels.regions {
            if l.record >= n {
                return Err(Error::validation(
                    Some(l.record),
                    format!("label refers to record {} of {n}", l.record),
                ));
            }
            if !seen.insert(l.record) {
                return Err(Error::validation(Some(l.record), "record labeled twice"));
            }
            for (task, cats) in l.categories.iter().chain(&l.unseen) {
                let t = self
                    .manifest
                    .task_index(task)
                    .ok_or_else(|| Error::validation(Some(l.record), format!("unknown task {task:?} in label")))?;
                for c in cats {
                    if self.manifest.tasks[t].category_index(c).is_none() {
                        return Err(Error::validation(
                            Some(l.record),
                            format!("unknown category {c:?} for task {task:?} in label"),
                        ));
                    }
                }
            }
        }
        let mut frames = BTreeSet::new();
        for f in &labels.frames {
            let video = self.manifest.video(&f.video_id).ok_or_else(|| {
                Error::validation(None, format!("frame label for undeclared video {:?}", f.video_id))
            })?;
            if !frames.insert(f.key()) {
                return Err(Error::validation(
                    None,
                    format!("frame {}#{} labeled twice", f.video_id, f.frame_index),
                ));
            }
            if let Some(mask) = &f.mask {
                if mask.width != video.width || mask.height != video.height {
                    return Err(Error::validation(
                        None,
                        format!(
                            "mask for {}#{} is {}x{}, frame is {}x{}",
                            f.video_id, f.frame_index, mask.width, mask.height, video.width, video.height
                        ),
                    ));
                }
                mask.check().map_err(|e| {
                    Error::validation(None, format!("frame {}#{}: {e}", f.video_id, f.frame_index))
                })?;
            }
        }
        Ok(())
    }

    fn duplicate_warnings(&self) -> Vec<PackWarning> {
        let mut first_seen: BTreeMap<(String, u64, [u64; 4], usize, Vec<usize>), usize> = BTreeMap::new();
        let mut warnings = Vec::new();
        for (i, r) in self.records.iter().enumerate() {
            let b = &r.bbox;
            let key = (
                r.video_id.clone(),
                r.frame_index,
                [b.x.to_bits(), b.y.to_bits(), b.w.to_bits(), b.h.to_bits()],
                r.feature_offset,
                r.score_offsets.clone(),
            );
            match first_seen.get(&key) {
                Some(&first) => warnings.push(PackWarning::DuplicateRecord { first, duplicate: i }),
                None => {
                    first_seen.insert(key, i);
                }
            }
        }
        warnings
    }

    /// A new pack holding only the given records (in the given order), with
    /// compacted matrices and remapped labels. Frame labels are kept for
    /// frames that still have a record.
    pub fn subset(&self, records: &[usize]) -> FeaturePack {
        let d = self.feature_dim();
        let mut features = Matrix::zeros(records.len(), d);
        let mut scores: Vec<Matrix<f32>> = self
            .manifest
            .tasks
            .iter()
            .map(|t| Matrix::zeros(records.len(), t.score_dim()))
            .collect();
        let mut new_records = Vec::with_capacity(records.len());
        for (new_i, &old_i) in records.iter().enumerate() {
            features.row_mut(new_i).copy_from_slice(self.record_features(old_i));
            for (t, s) in scores.iter_mut().enumerate() {
                s.row_mut(new_i).copy_from_slice(self.record_scores(old_i, t));
            }
            let old = &self.records[old_i];
            new_records.push(RegionRecord {
                video_id: old.video_id.clone(),
                frame_index: old.frame_index,
                bbox: old.bbox,
                feature_offset: new_i,
                score_offsets: alloc::vec![new_i; self.manifest.tasks.len()],
            });
        }
        let labels = self.labels.as_ref().map(|l| {
            let mut remap = BTreeMap::new();
            for (new_i, &old_i) in records.iter().enumerate() {
                remap.entry(old_i).or_insert(new_i);
            }
            let regions = l
                .regions
                .iter()
                .filter_map(|r| {
                    remap.get(&r.record).map(|&new_i| RegionLabel {
                        record: new_i,
                        ..r.clone()
                    })
                })
                .collect();
            let kept: BTreeSet<FrameKey> = new_records
                .iter()
                .map(|r| FrameKey::new(r.video_id.clone(), r.frame_index))
                .collect();
            let frames = l
                .frames
                .iter()
                .filter(|f| kept.contains(&f.key()))
                .cloned()
                .collect();
            Labels { regions, frames }
        });
        let used_videos: BTreeSet<&str> = new_records.iter().map(|r| r.video_id.as_str()).collect();
        let videos = self
            .manifest
            .videos
            .iter()
            .filter(|v| used_videos.contains(v.video_id.as_str()))
            .cloned()
            .collect();
        FeaturePack {
            manifest: Manifest {
                version: self.manifest.version,
                feature_dim: d,
                videos,
                tasks: self.manifest.tasks.clone(),
                record_count: records.len(),
            },
            records: new_records,
            features,
            scores,
            labels,
        }
    }
}
