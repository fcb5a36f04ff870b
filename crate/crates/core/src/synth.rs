//! Deterministic synthetic feature packs with planted anomalies.
//!
//! Frames are split into a `grid_rows x grid_cols` layout and region `j` of a
//! frame lies inside cell `j mod cells`. Each cell has its own Gaussian
//! cluster whose covariance lives on a shared low-rank subspace of the
//! feature space (plus a little isotropic noise), so linear projections keep
//! the planted structure. Anomalies are displaced from their cell mean along
//! a random direction inside that subspace.
//!
//! Classification scores follow the same split: a normal region is high on
//! one common category of every task, an anomalous region is high on one
//! rare category, and every other category gets a background score.
//!
//! All randomness comes from one xoshiro256++ stream seeded with
//! `SynthConfig::seed`; the training pack is drawn before the test pack.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::pixel::rasterize;
use crate::math::{dot, round, sqrt};
use crate::matrix::Matrix;
use crate::pack::{
    BBox, ConceptTask, FeaturePack, FrameLabel, Labels, Manifest, RegionLabel, RegionRecord, RleMask, VideoInfo,
    FORMAT_VERSION,
};
use crate::rng::{seeded, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTask {
    pub name: String,
    /// Categories seen on normal regions.
    pub common: Vec<String>,
    /// Categories seen only on anomalies.
    pub rare: Vec<String>,
}

impl SynthTask {
    pub fn new(name: &str, common: &[&str], rare: &[&str]) -> Self {
        let own = |v: &[&str]| v.iter().map(|s| String::from(*s)).collect();
        SynthTask {
            name: name.into(),
            common: own(common),
            rare: own(rare),
        }
    }

    pub fn categories(&self) -> Vec<String> {
        self.common.iter().chain(&self.rare).cloned().collect()
    }
}

/// Inclusive-exclusive uniform score range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRange {
    pub lo: f64,
    pub hi: f64,
}

impl ScoreRange {
    fn draw(&self, rng: &mut SeededRng) -> f32 {
        if self.hi > self.lo {
            rng.random_range(self.lo..self.hi) as f32
        } else {
            self.lo as f32
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub train_frames: usize,
    pub test_frames: usize,
    pub regions_per_frame: usize,
    pub frame_width: u32,
    pub frame_height: u32,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub feature_dim: usize,
    /// Rank of the cluster covariance.
    pub latent_dim: usize,
    /// Standard deviation of the clusters along the latent axes.
    pub cluster_scale: f64,
    /// Standard deviation of the cell means around the origin.
    pub cluster_spread: f64,
    /// Standard deviation of isotropic noise on every feature.
    pub noise_scale: f64,
    /// Fraction of test regions that are anomalous, in `(0, 0.5)`.
    pub anomaly_fraction: f64,
    /// Distance of an anomaly from its cell mean.
    pub displacement: f64,
    pub tasks: Vec<SynthTask>,
    /// Score of the category a region actually shows.
    pub present_score: ScoreRange,
    /// Score of every other category.
    pub background_score: ScoreRange,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            train_frames: 300,
            test_frames: 200,
            regions_per_frame: 12,
            frame_width: 320,
            frame_height: 240,
            grid_rows: 3,
            grid_cols: 4,
            feature_dim: 64,
            latent_dim: 8,
            cluster_scale: 1.0,
            cluster_spread: 10.0,
            noise_scale: 0.01,
            anomaly_fraction: 0.05,
            displacement: 8.0,
            tasks: vec![
                SynthTask::new("object", &["person", "car", "bicycle", "bag"], &["truck", "dog"]),
                SynthTask::new("action", &["walk", "stand", "sit"], &["run", "throw"]),
                SynthTask::new("attribute", &["red", "blue", "green", "black"], &["white"]),
            ],
            present_score: ScoreRange { lo: 0.6, hi: 0.95 },
            background_score: ScoreRange { lo: 0.0, hi: 0.05 },
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let f = self.anomaly_fraction;
        if !(f > 0.0 && f < 0.5) {
            return Err(Error::invalid(format!("anomaly fraction {f} is outside (0, 0.5)")));
        }
        if !(self.displacement > 0.0 && self.displacement.is_finite()) {
            return Err(Error::invalid(format!(
                "displacement must be positive, got {}",
                self.displacement
            )));
        }
        if self.train_frames == 0 || self.test_frames == 0 || self.regions_per_frame == 0 {
            return Err(Error::invalid("frame and region counts must be positive"));
        }
        if self.latent_dim == 0 || self.latent_dim > self.feature_dim {
            return Err(Error::invalid(format!(
                "latent dimension {} must be in 1..={}",
                self.latent_dim, self.feature_dim
            )));
        }
        if self.grid_rows == 0 || self.grid_cols == 0 {
            return Err(Error::invalid("grid must have at least one cell"));
        }
        if (self.frame_width as usize) < 2 * self.grid_cols || (self.frame_height as usize) < 2 * self.grid_rows {
            return Err(Error::invalid("frame is too small for the grid"));
        }
        for (name, v) in [
            ("cluster scale", self.cluster_scale),
            ("cluster spread", self.cluster_spread),
            ("noise scale", self.noise_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be finite and non-negative")));
            }
        }
        for r in [self.present_score, self.background_score] {
            if !(0.0 <= r.lo && r.lo <= r.hi && r.hi <= 1.0) {
                return Err(Error::invalid(format!("score range [{}, {}] is not within [0, 1]", r.lo, r.hi)));
            }
        }
        let mut names = BTreeSet::new();
        for t in &self.tasks {
            if !names.insert(t.name.as_str()) {
                return Err(Error::invalid(format!("duplicate task {:?}", t.name)));
            }
            if t.common.is_empty() || t.rare.is_empty() {
                return Err(Error::invalid(format!(
                    "task {:?} needs common and rare categories",
                    t.name
                )));
            }
            let cats = t.categories();
            let unique: BTreeSet<&String> = cats.iter().collect();
            if unique.len() != cats.len() {
                return Err(Error::invalid(format!("task {:?} repeats a category", t.name)));
            }
        }
        Ok(())
    }

    fn cells(&self) -> usize {
        self.grid_rows * self.grid_cols
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    /// Normal regions only.
    pub train: FeaturePack,
    /// Normal and anomalous regions with frame, mask and category labels.
    pub test: FeaturePack,
}

struct World {
    /// `latent_dim x feature_dim`, orthonormal rows.
    basis: Matrix<f64>,
    /// `cells x feature_dim`.
    means: Matrix<f64>,
}

fn gaussian(rng: &mut SeededRng) -> f64 {
    rng.sample(StandardNormal)
}

fn unit_vector(rng: &mut SeededRng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| gaussian(rng)).collect();
        let n = sqrt(dot(&v, &v));
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

impl World {
    fn draw(cfg: &SynthConfig, rng: &mut SeededRng) -> World {
        let d = cfg.feature_dim;
        let mut basis = Matrix::zeros(cfg.latent_dim, d);
        // Gram-Schmidt on Gaussian vectors.
        let mut r = 0;
        while r < cfg.latent_dim {
            let mut v: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
            for prev in 0..r {
                let p = basis.row(prev);
                let c = dot(&v, p);
                for (x, y) in v.iter_mut().zip(p) {
                    *x -= c * y;
                }
            }
            let n = sqrt(dot(&v, &v));
            if n > 1e-6 {
                for (dst, x) in basis.row_mut(r).iter_mut().zip(&v) {
                    *dst = x / n;
                }
                r += 1;
            }
        }
        let mut means = Matrix::zeros(cfg.cells(), d);
        for c in 0..cfg.cells() {
            for v in means.row_mut(c) {
                *v = cfg.cluster_spread * gaussian(rng);
            }
        }
        World { basis, means }
    }

    fn sample(&self, cfg: &SynthConfig, rng: &mut SeededRng, cell: usize, anomalous: bool) -> Vec<f32> {
        let k = cfg.latent_dim;
        let mut z: Vec<f64> = (0..k).map(|_| cfg.cluster_scale * gaussian(rng)).collect();
        if anomalous {
            let u = unit_vector(rng, k);
            for (zi, ui) in z.iter_mut().zip(&u) {
                *zi += cfg.displacement * ui;
            }
        }
        let mut x: Vec<f64> = self.means.row(cell).to_vec();
        for (zi, axis) in z.iter().zip(self.basis.iter_rows()) {
            for (xj, aj) in x.iter_mut().zip(axis) {
                *xj += zi * aj;
            }
        }
        x.iter()
            .map(|v| (v + cfg.noise_scale * gaussian(rng)) as f32)
            .collect()
    }
}

/// Box strictly inside grid cell `cell`, half the cell size, placed at random.
fn cell_box(cfg: &SynthConfig, rng: &mut SeededRng, cell: usize) -> BBox {
    let cw = f64::from(cfg.frame_width) / cfg.grid_cols as f64;
    let ch = f64::from(cfg.frame_height) / cfg.grid_rows as f64;
    let (row, col) = (cell / cfg.grid_cols, cell % cfg.grid_cols);
    let (w, h) = (cw / 2.0, ch / 2.0);
    let x = col as f64 * cw + rng.random_range(0.0..cw - w);
    let y = row as f64 * ch + rng.random_range(0.0..ch - h);
    BBox::new(x, y, w, h)
}

fn build_pack(
    cfg: &SynthConfig,
    world: &World,
    rng: &mut SeededRng,
    video_id: &str,
    frames: usize,
    anomaly_count: usize,
) -> FeaturePack {
    let n = frames * cfg.regions_per_frame;
    let anomalous: BTreeSet<usize> = rand::seq::index::sample(rng, n, anomaly_count).into_iter().collect();
    let tasks: Vec<ConceptTask> = cfg
        .tasks
        .iter()
        .map(|t| ConceptTask {
            name: t.name.clone(),
            categories: t.categories(),
        })
        .collect();

    let mut features = Matrix::zeros(n, cfg.feature_dim);
    let mut scores: Vec<Matrix<f32>> = tasks.iter().map(|t| Matrix::zeros(n, t.score_dim())).collect();
    let mut records = Vec::with_capacity(n);
    let mut regions = Vec::with_capacity(n);
    let mut frame_labels = Vec::with_capacity(frames);

    for f in 0..frames {
        let mut abnormal_boxes = Vec::new();
        for j in 0..cfg.regions_per_frame {
            let i = f * cfg.regions_per_frame + j;
            let cell = j % cfg.cells();
            let is_anomaly = anomalous.contains(&i);
            let bbox = cell_box(cfg, rng, cell);
            features
                .row_mut(i)
                .copy_from_slice(&world.sample(cfg, rng, cell, is_anomaly));

            let mut categories = BTreeMap::new();
            let mut unseen = BTreeMap::new();
            for (t, task) in cfg.tasks.iter().enumerate() {
                let present = if is_anomaly {
                    task.common.len() + rng.random_range(0..task.rare.len())
                } else {
                    rng.random_range(0..task.common.len())
                };
                for (c, s) in scores[t].row_mut(i).iter_mut().enumerate() {
                    *s = if c == present {
                        cfg.present_score.draw(rng)
                    } else {
                        cfg.background_score.draw(rng)
                    };
                }
                let name = tasks[t].categories[present].clone();
                if is_anomaly {
                    unseen.insert(task.name.clone(), vec![name.clone()]);
                }
                categories.insert(task.name.clone(), vec![name]);
            }
            if is_anomaly {
                abnormal_boxes.push(bbox);
            }
            records.push(RegionRecord {
                video_id: video_id.into(),
                frame_index: f as u64,
                bbox,
                feature_offset: i,
                score_offsets: vec![i; tasks.len()],
            });
            regions.push(RegionLabel {
                record: i,
                abnormal: Some(is_anomaly),
                categories,
                unseen,
            });
        }
        let mask = rasterize(&abnormal_boxes, cfg.frame_width, cfg.frame_height);
        frame_labels.push(FrameLabel {
            video_id: video_id.into(),
            frame_index: f as u64,
            abnormal: !abnormal_boxes.is_empty(),
            mask: Some(RleMask::from_bitmap(cfg.frame_width, cfg.frame_height, &mask)),
        });
    }

    FeaturePack {
        manifest: Manifest {
            version: FORMAT_VERSION,
            feature_dim: cfg.feature_dim,
            videos: vec![VideoInfo {
                video_id: video_id.into(),
                width: cfg.frame_width,
                height: cfg.frame_height,
            }],
            tasks,
            record_count: n,
        },
        records,
        features,
        scores,
        labels: Some(Labels {
            regions,
            frames: frame_labels,
        }),
    }
}

/// Number of anomalous test regions: `round(fraction * n)`, at least 1.
pub fn anomaly_count(cfg: &SynthConfig) -> usize {
    let n = cfg.test_frames * cfg.regions_per_frame;
    (round(cfg.anomaly_fraction * n as f64) as usize).clamp(1, n)
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let mut rng = seeded(cfg.seed);
    let world = World::draw(cfg, &mut rng);
    let train = build_pack(cfg, &world, &mut rng, "train", cfg.train_frames, 0);
    let test = build_pack(cfg, &world, &mut rng, "test", cfg.test_frames, anomaly_count(cfg));
    Ok(SynthOutput { train, test })
}

/// Categories of the split fixture's single task, `object`.
pub const SPLIT_CATEGORIES: [&str; 12] = [
    "person", "car", "bicycle", "bag", "dog", "truck", "bus", "horse", "chair", "bottle", "umbrella", "bench",
];
pub const SPLIT_IMAGES: usize = 240;
pub const SPLIT_FEATURE_DIM: usize = 16;

/// An annotated pack for the unseen-category split protocol.
///
/// Each of 240 images holds one or two regions and each region shows a
/// single category of 12. Every category covers well under half of the
/// images, so any choice of three unseen categories leaves enough seen-only
/// images to balance the test set.
pub fn generate_split_fixture(seed: u64) -> FeaturePack {
    let mut rng = seeded(seed);
    let n_cat = SPLIT_CATEGORIES.len();
    let task = ConceptTask::new("object", &SPLIT_CATEGORIES);
    let (width, height) = (160u32, 120u32);

    let mut features_flat = Vec::new();
    let mut score_flat = Vec::new();
    let mut records = Vec::new();
    let mut regions = Vec::new();
    let mut frames = Vec::new();
    for img in 0..SPLIT_IMAGES {
        // Round-robin first category keeps per-category counts even.
        let first = img % n_cat;
        let mut cats = vec![first];
        if rng.random_bool(0.5) {
            let second = (first + 1 + rng.random_range(0..n_cat - 1)) % n_cat;
            cats.push(second);
        }
        for (slot, &c) in cats.iter().enumerate() {
            let i = records.len();
            for d in 0..SPLIT_FEATURE_DIM {
                let center = if d % n_cat == c { 3.0 } else { 0.0 };
                features_flat.push((center + gaussian(&mut rng)) as f32);
            }
            for k in 0..n_cat {
                score_flat.push(if k == c {
                    rng.random_range(0.6..0.95f32)
                } else {
                    rng.random_range(0.0..0.05f32)
                });
            }
            let x = if slot == 0 { 10.0 } else { 90.0 };
            records.push(RegionRecord {
                video_id: "split".into(),
                frame_index: img as u64,
                bbox: BBox::new(x, 20.0, 50.0, 60.0),
                feature_offset: i,
                score_offsets: vec![i],
            });
            let mut categories = BTreeMap::new();
            categories.insert(String::from("object"), vec![String::from(SPLIT_CATEGORIES[c])]);
            regions.push(RegionLabel {
                record: i,
                abnormal: Some(false),
                categories,
                unseen: BTreeMap::new(),
            });
        }
        frames.push(FrameLabel {
            video_id: "split".into(),
            frame_index: img as u64,
            abnormal: false,
            mask: None,
        });
    }
    let n = records.len();
    FeaturePack {
        manifest: Manifest {
            version: FORMAT_VERSION,
            feature_dim: SPLIT_FEATURE_DIM,
            videos: vec![VideoInfo {
                video_id: "split".into(),
                width,
                height,
            }],
            tasks: vec![task],
            record_count: n,
        },
        records,
        features: Matrix::from_vec(n, SPLIT_FEATURE_DIM, features_flat).expect("row-major fill"),
        scores: vec![Matrix::from_vec(n, n_cat, score_flat).expect("row-major fill")],
        labels: Some(Labels { regions, frames }),
    }
}
