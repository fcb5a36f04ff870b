//! Nearest-neighbour novelty: the anomaly score is the distance to the
//! closest training sample, either exactly or through PQ codes.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{dot, sq_dist, sqrt};
use crate::matrix::Matrix;
use crate::reduction::pq::{PqCode, PqCodebook, PqConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NnModel {
    Exact {
        points: Matrix<f64>,
    },
    Compressed {
        codebook: PqCodebook,
        codes: Vec<PqCode>,
        /// L2-normalize vectors before quantizing and querying.
        normalize: bool,
    },
}

fn l2_normalized(x: &[f64]) -> Vec<f64> {
    let norm = sqrt(dot(x, x));
    if norm > 0.0 {
        x.iter().map(|v| v / norm).collect()
    } else {
        x.to_vec()
    }
}

impl NnModel {
    pub fn fit_exact(features: &Matrix<f64>) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::Empty("nearest-neighbour training set"));
        }
        Ok(NnModel::Exact {
            points: features.clone(),
        })
    }

    pub fn fit_compressed(features: &Matrix<f64>, pq: &PqConfig, normalize: bool) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::Empty("nearest-neighbour training set"));
        }
        let normalized;
        let data = if normalize {
            let mut m = Matrix::zeros(features.nrows(), features.ncols());
            for (i, r) in features.iter_rows().enumerate() {
                m.row_mut(i).copy_from_slice(&l2_normalized(r));
            }
            normalized = m;
            &normalized
        } else {
            features
        };
        let codebook = PqCodebook::train(data, pq)?;
        let codes = data
            .iter_rows()
            .map(|r| codebook.encode(r))
            .collect::<Result<Vec<_>>>()?;
        Ok(NnModel::Compressed {
            codebook,
            codes,
            normalize,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            NnModel::Exact { points } => points.ncols(),
            NnModel::Compressed { codebook, .. } => codebook.dim,
        }
    }

    /// Distance to the nearest training sample. In compressed mode this is
    /// the square root of the smallest ADC distance.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        Error::check_dim(self.dim(), x.len())?;
        let best = match self {
            NnModel::Exact { points } => points
                .iter_rows()
                .map(|p| sq_dist(p, x))
                .fold(f64::INFINITY, f64::min),
            NnModel::Compressed {
                codebook,
                codes,
                normalize,
            } => {
                let table = if *normalize {
                    codebook.adc_table(&l2_normalized(x))?
                } else {
                    codebook.adc_table(x)?
                };
                codes
                    .iter()
                    .map(|c| table.distance(c))
                    .fold(f64::INFINITY, f64::min)
            }
        };
        Ok(sqrt(best))
    }
}
