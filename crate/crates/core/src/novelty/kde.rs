//! Gaussian kernel density estimation with per-dimension Scott bandwidths.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{exp, ln, log_sum_exp, powf, sqrt, LN_SQRT_2PI};
use crate::matrix::Matrix;

/// Densities below this are raised to it before taking the reciprocal.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// Relative floor for bandwidths of zero-variance dimensions.
pub const BANDWIDTH_FLOOR: f64 = 1e-6;

/// Per-column sample standard deviation (denominator `n - 1`).
pub fn sample_std(features: &Matrix<f64>) -> Result<Vec<f64>> {
    let n = features.nrows();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let mean = features.column_means();
    let mut var = alloc::vec![0.0; features.ncols()];
    for row in features.iter_rows() {
        for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
            let d = x - m;
            *v += d * d;
        }
    }
    Ok(var.into_iter().map(|v| sqrt(v / (n - 1) as f64)).collect())
}

/// Scott's factor `n^(-1/(d+4))`.
pub fn scott_factor(n: usize, d: usize) -> f64 {
    powf(n as f64, -1.0 / (d as f64 + 4.0))
}

/// `h_j = sigma_j * n^(-1/(d+4))`, with every `h_j` raised to at least
/// `1e-6 * max(1, mean nonzero sigma)`.
pub fn scott_bandwidth(features: &Matrix<f64>) -> Result<Vec<f64>> {
    let std = sample_std(features)?;
    let factor = scott_factor(features.nrows(), features.ncols());
    Ok(floor_bandwidths(std.iter().map(|s| s * factor).collect(), &std))
}

pub(crate) fn floor_bandwidths(mut h: Vec<f64>, std: &[f64]) -> Vec<f64> {
    let nonzero: Vec<f64> = std.iter().copied().filter(|&s| s > 0.0).collect();
    let mean_std = if nonzero.is_empty() {
        0.0
    } else {
        nonzero.iter().sum::<f64>() / nonzero.len() as f64
    };
    let floor = BANDWIDTH_FLOOR * mean_std.max(1.0);
    for v in &mut h {
        if !(*v >= floor) {
            *v = floor;
        }
    }
    h
}

/// Product-kernel Gaussian KDE:
/// `p(x) = 1/n * sum_i prod_j phi((x_j - x_ij) / h_j) / h_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeModel {
    pub points: Matrix<f64>,
    pub bandwidth: Vec<f64>,
}

impl KdeModel {
    pub fn fit(features: &Matrix<f64>) -> Result<Self> {
        let bandwidth = scott_bandwidth(features)?;
        Ok(KdeModel {
            points: features.clone(),
            bandwidth,
        })
    }

    pub fn with_bandwidth(points: Matrix<f64>, bandwidth: Vec<f64>) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::Empty("KDE sample set"));
        }
        Error::check_dim(points.ncols(), bandwidth.len())?;
        if bandwidth.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
            return Err(Error::invalid("KDE bandwidths must be positive and finite"));
        }
        Ok(KdeModel { points, bandwidth })
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        Error::check_dim(self.dim(), x.len())?;
        let log_norm: f64 =
            self.bandwidth.iter().map(|h| ln(*h)).sum::<f64>() + self.dim() as f64 * LN_SQRT_2PI;
        let terms: Vec<f64> = self
            .points
            .iter_rows()
            .map(|p| {
                let q: f64 = p
                    .iter()
                    .zip(x)
                    .zip(&self.bandwidth)
                    .map(|((pi, xi), h)| {
                        let z = (xi - pi) / h;
                        z * z
                    })
                    .sum();
                -0.5 * q
            })
            .collect();
        Ok(log_sum_exp(&terms) - ln(self.points.nrows() as f64) - log_norm)
    }

    pub fn density(&self, x: &[f64]) -> Result<f64> {
        self.log_density(x).map(exp)
    }

    /// Anomaly score `1 / max(p(x), DENSITY_FLOOR)`.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        Ok(1.0 / self.density(x)?.max(DENSITY_FLOOR))
    }
}
