//! Artificial unseen-concept datasets.
//!
//! Procedure per repeat: pick about a quarter of the annotated categories
//! of one task as unseen; every image showing an unseen category goes to
//! the test set; seen-only images are shuffled and enough of them join the
//! test set as distractors to make both sides the same size (within one);
//! the rest is the training set, which therefore contains seen categories
//! only.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::round;
use crate::pack::{FeaturePack, FrameKey, RegionLabel};
use crate::rng::{derive_seed, seeded};

pub const DEFAULT_REPEATS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub task: String,
    pub seed: u64,
    /// 1-based repeat number; each repeat draws from its own stream.
    pub repeat: usize,
}

/// `round(n / 4)`, at least 1.
pub fn n_unseen(n: usize) -> usize {
    (round(n as f64 / 4.0) as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub task: String,
    pub repeat: usize,
    pub unseen: Vec<String>,
    pub train_records: Vec<usize>,
    pub test_records: Vec<usize>,
    pub train_images: usize,
    pub test_images: usize,
}

fn region_categories<'a>(label: Option<&'a RegionLabel>, task: &str) -> &'a [String] {
    label
        .and_then(|l| l.categories.get(task))
        .map_or(&[], Vec::as_slice)
}

pub fn split_unseen(pack: &FeaturePack, spec: &SplitSpec) -> Result<Split> {
    let task_index = pack
        .manifest
        .task_index(&spec.task)
        .ok_or_else(|| Error::UnknownTask(spec.task.clone()))?;
    let labels = pack
        .labels
        .as_ref()
        .ok_or_else(|| Error::validation(None, "split needs category annotations"))?;
    let by_record = labels.regions_by_record(pack.len());

    let mut images: BTreeMap<FrameKey, (Vec<usize>, BTreeSet<&str>)> = BTreeMap::new();
    for (i, r) in pack.records.iter().enumerate() {
        let e = images
            .entry(FrameKey::new(r.video_id.clone(), r.frame_index))
            .or_default();
        e.0.push(i);
        e.1.extend(region_categories(by_record[i], &spec.task).iter().map(String::as_str));
    }
    let annotated: BTreeSet<&str> = images.values().flat_map(|(_, c)| c.iter().copied()).collect();
    let categories: Vec<&str> = pack.manifest.tasks[task_index]
        .categories
        .iter()
        .map(String::as_str)
        .filter(|c| annotated.contains(c))
        .collect();
    let n = categories.len();
    let k = n_unseen(n);
    if n < 2 {
        return Err(Error::SplitImpossible(alloc::format!(
            "task {:?} has {n} annotated categories",
            spec.task
        )));
    }

    let mut rng = seeded(derive_seed(spec.seed, spec.repeat as u64));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut chosen: Vec<usize> = order[..k].to_vec();
    chosen.sort_unstable();
    let unseen: Vec<&str> = chosen.iter().map(|&i| categories[i]).collect();

    for u in &unseen {
        if images.values().all(|(_, c)| c.contains(u)) {
            return Err(Error::SplitImpossible(alloc::format!(
                "category {u:?} appears in every image"
            )));
        }
    }

    let (with_unseen, mut seen_only): (Vec<_>, Vec<_>) = images
        .values()
        .partition(|(_, c)| unseen.iter().any(|u| c.contains(u)));
    if seen_only.len() < with_unseen.len() {
        return Err(Error::SplitImpossible(alloc::format!(
            "{} images show unseen categories but only {} are seen-only",
            with_unseen.len(),
            seen_only.len()
        )));
    }
    seen_only.shuffle(&mut rng);
    let distractors = (seen_only.len() - with_unseen.len()) / 2;

    let mut test_records: Vec<usize> = with_unseen
        .iter()
        .chain(&seen_only[..distractors])
        .flat_map(|(r, _)| r.iter().copied())
        .collect();
    let mut train_records: Vec<usize> = seen_only[distractors..]
        .iter()
        .flat_map(|(r, _)| r.iter().copied())
        .collect();
    test_records.sort_unstable();
    train_records.sort_unstable();

    Ok(Split {
        task: spec.task.clone(),
        repeat: spec.repeat,
        unseen: unseen.into_iter().map(String::from).collect(),
        train_records,
        test_records,
        train_images: seen_only.len() - distractors,
        test_images: with_unseen.len() + distractors,
    })
}

impl Split {
    /// Materializes `(train, test)` packs. Test labels mark regions showing
    /// an unseen category as abnormal and list those categories as unseen;
    /// training labels carry no unseen annotations.
    pub fn apply(&self, pack: &FeaturePack) -> (FeaturePack, FeaturePack) {
        let mut train = pack.subset(&self.train_records);
        let mut test = pack.subset(&self.test_records);
        if let Some(labels) = &mut train.labels {
            for r in &mut labels.regions {
                r.unseen.clear();
                r.abnormal = Some(false);
            }
        }
        let unseen: BTreeSet<&str> = self.unseen.iter().map(String::as_str).collect();
        if let Some(labels) = &mut test.labels {
            let mut labeled = alloc::vec![false; test.records.len()];
            for r in &mut labels.regions {
                labeled[r.record] = true;
                r.unseen.clear();
                let hits: Vec<String> = r
                    .categories
                    .get(&self.task)
                    .into_iter()
                    .flatten()
                    .filter(|c| unseen.contains(c.as_str()))
                    .cloned()
                    .collect();
                r.abnormal = Some(!hits.is_empty());
                if !hits.is_empty() {
                    r.unseen.insert(self.task.clone(), hits);
                }
            }
            for (i, done) in labeled.into_iter().enumerate() {
                if !done {
                    labels.regions.push(RegionLabel {
                        record: i,
                        abnormal: Some(false),
                        ..Default::default()
                    });
                }
            }
            labels.regions.sort_by_key(|r| r.record);
        }
        (train, test)
    }
}
