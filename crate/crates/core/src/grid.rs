//! Spatial grid of novelty detectors.
//!
//! The frame is cut into `rows x cols` equal cells (3 x 4 by default) and
//! one detector is trained per cell on the regions whose box centre falls
//! inside it. A region is scored by the detector of its own cell.

use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::floor;
use crate::matrix::Matrix;
use crate::novelty::{DetectorConfig, NoveltyModel};
use crate::pack::{BBox, FeaturePack};
use crate::rng::derive_seed;

pub const DEFAULT_ROWS: usize = 3;
pub const DEFAULT_COLS: usize = 4;
pub const DEFAULT_MIN_SAMPLES: usize = 2;

/// Score given to regions that land in a cell without a trained detector.
pub const UNTRAINED_SCORE: f64 = f64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub frame_width: f64,
    pub frame_height: f64,
}

impl GridSpec {
    pub fn new(rows: usize, cols: usize, frame_width: f64, frame_height: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("grid needs at least one row and one column"));
        }
        if !(frame_width > 0.0 && frame_height > 0.0) {
            return Err(Error::invalid("frame dimensions must be positive"));
        }
        Ok(GridSpec {
            rows,
            cols,
            frame_width,
            frame_height,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    /// `(row, col)` of the cell holding the box centre. Centres on a cell
    /// boundary go to the higher cell; centres past the last boundary are
    /// clamped into the last cell.
    pub fn assign_cell(&self, bbox: &BBox) -> Result<(usize, usize)> {
        if bbox.is_degenerate() {
            return Err(Error::invalid(alloc::format!(
                "degenerate box {}x{}",
                bbox.w, bbox.h
            )));
        }
        let (cx, cy) = bbox.center();
        let cell_h = self.frame_height / self.rows as f64;
        let cell_w = self.frame_width / self.cols as f64;
        let row = clamp_index(floor(cy / cell_h), self.rows);
        let col = clamp_index(floor(cx / cell_w), self.cols);
        Ok((row, col))
    }

    pub fn cell_index(&self, (row, col): (usize, usize)) -> usize {
        row * self.cols + col
    }

    /// Record indices per cell (row-major cell order).
    pub fn route(&self, boxes: &[BBox]) -> Result<Vec<Vec<usize>>> {
        let mut cells = alloc::vec![Vec::new(); self.cell_count()];
        for (i, b) in boxes.iter().enumerate() {
            cells[self.cell_index(self.assign_cell(b)?)].push(i);
        }
        Ok(cells)
    }
}

fn clamp_index(v: f64, n: usize) -> usize {
    if v.is_nan() || v < 0.0 {
        0
    } else if v >= (n - 1) as f64 {
        n - 1
    } else {
        v as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BankConfig {
    pub detector: DetectorConfig,
    /// Cells with fewer training regions stay untrained.
    pub min_samples: usize,
    /// Map each cell's raw score to its rank among the cell's training
    /// scores, making scores comparable across cells.
    pub rank_normalize: bool,
    pub seed: u64,
}

impl BankConfig {
    pub fn new(detector: DetectorConfig, seed: u64) -> Self {
        BankConfig {
            detector,
            min_samples: DEFAULT_MIN_SAMPLES,
            rank_normalize: false,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    Fitted {
        model: NoveltyModel,
        /// Sorted training-set scores, present when rank normalization is on.
        calibration: Option<Vec<f64>>,
    },
    Empty {
        samples: usize,
    },
}

impl Cell {
    pub fn is_fitted(&self) -> bool {
        matches!(self, Cell::Fitted { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub score: f64,
    pub row: usize,
    pub col: usize,
    pub untrained_cell: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridBank {
    pub spec: GridSpec,
    pub config: BankConfig,
    pub input_dim: usize,
    /// Row-major.
    pub cells: Vec<Cell>,
}

fn cmp_rows(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

impl GridBank {
    /// Fits one detector per cell. `features` row `i` belongs to `boxes[i]`.
    ///
    /// Each cell's rows are put in a canonical (lexicographic) order before
    /// fitting, so the bank does not depend on record order.
    pub fn fit(spec: GridSpec, features: &Matrix<f64>, boxes: &[BBox], config: BankConfig) -> Result<Self> {
        Error::check_dim(features.nrows(), boxes.len())?;
        if features.nrows() == 0 {
            return Err(Error::Empty("grid bank training records"));
        }
        let min_samples = config.min_samples.max(config.detector.min_samples());
        let routed = spec.route(boxes)?;
        let mut cells = Vec::with_capacity(routed.len());
        for (c, members) in routed.iter().enumerate() {
            if members.len() < min_samples {
                cells.push(Cell::Empty {
                    samples: members.len(),
                });
                continue;
            }
            let mut order = members.clone();
            order.sort_by(|&a, &b| cmp_rows(features.row(a), features.row(b)));
            let data = features.select_rows(&order);
            let model = NoveltyModel::fit(&config.detector, &data, derive_seed(config.seed, c as u64))?;
            let calibration = if config.rank_normalize {
                let mut s = data
                    .iter_rows()
                    .map(|r| model.score(r))
                    .collect::<Result<Vec<_>>>()?;
                s.sort_by(f64::total_cmp);
                Some(s)
            } else {
                None
            };
            cells.push(Cell::Fitted { model, calibration });
        }
        Ok(GridBank {
            spec,
            config,
            input_dim: features.ncols(),
            cells,
        })
    }

    /// Fits on every record of a pack. All videos must share one frame size.
    pub fn fit_pack(rows: usize, cols: usize, pack: &FeaturePack, config: BankConfig) -> Result<Self> {
        let spec = grid_for_pack(rows, cols, pack)?;
        let all: Vec<usize> = (0..pack.len()).collect();
        let features = pack.feature_matrix_f64(&all);
        let boxes: Vec<BBox> = pack.records.iter().map(|r| r.bbox).collect();
        Self::fit(spec, &features, &boxes, config)
    }

    pub fn fitted_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.is_fitted()).count()
    }

    pub fn cell(&self, row: usize, col: usize) -> &Cell {
        &self.cells[self.spec.cell_index((row, col))]
    }

    pub fn score(&self, x: &[f64], bbox: &BBox) -> Result<CellScore> {
        Error::check_dim(self.input_dim, x.len())?;
        let (row, col) = self.spec.assign_cell(bbox)?;
        match &self.cells[self.spec.cell_index((row, col))] {
            Cell::Empty { .. } => Ok(CellScore {
                score: UNTRAINED_SCORE,
                row,
                col,
                untrained_cell: true,
            }),
            Cell::Fitted { model, calibration } => {
                let raw = model.score(x)?;
                let score = match calibration {
                    Some(cal) if !cal.is_empty() => {
                        cal.partition_point(|&s| s <= raw) as f64 / cal.len() as f64
                    }
                    _ => raw,
                };
                Ok(CellScore {
                    score,
                    row,
                    col,
                    untrained_cell: false,
                })
            }
        }
    }
}

impl GridBank {
    /// Scores every record of a pack, in record order.
    pub fn score_pack(&self, pack: &FeaturePack) -> Result<Vec<CellScore>> {
        Error::check_dim(self.input_dim, pack.feature_dim())?;
        (0..pack.len())
            .map(|i| self.score(&pack.record_features_f64(i), &pack.records[i].bbox))
            .collect()
    }
}

/// Grid spec matching the (single) frame size used by a pack's videos.
pub fn grid_for_pack(rows: usize, cols: usize, pack: &FeaturePack) -> Result<GridSpec> {
    let mut size = None;
    for v in &pack.manifest.videos {
        match size {
            None => size = Some((v.width, v.height)),
            Some(s) if s != (v.width, v.height) => {
                return Err(Error::invalid(alloc::format!(
                    "videos have different frame sizes ({}x{} vs {}x{})",
                    s.0, s.1, v.width, v.height
                )))
            }
            _ => {}
        }
    }
    let (w, h) = size.ok_or(Error::Empty("pack declares no videos"))?;
    GridSpec::new(rows, cols, f64::from(w), f64::from(h))
}
