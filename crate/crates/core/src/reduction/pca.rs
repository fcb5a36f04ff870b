//! Principal component analysis.
//!
//! Components are the leading eigenvectors of the sample covariance
//! (denominator `n - 1`). When samples are fewer than dimensions the
//! decomposition runs on the `n x n` Gram matrix instead and the components
//! are mapped back, which gives the same subspace at a fraction of the cost
//! for 4096-dimensional features.
//!
//! Each component is oriented so that its largest-magnitude entry is
//! positive (first such entry on ties).

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{abs, dot, sqrt};
use crate::matrix::Matrix;
use crate::reduction::eigen::symmetric_eigen;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k x d`, orthonormal rows.
    pub components: Matrix<f64>,
    /// Variance captured by each component, non-increasing.
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn fit(features: &Matrix<f64>, k: usize) -> Result<Self> {
        let n = features.nrows();
        let d = features.ncols();
        if n < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: n });
        }
        if k == 0 || k > (n - 1).min(d) {
            return Err(Error::invalid(alloc::format!(
                "PCA target dimension {k} outside 1..={} for {n} samples of dimension {d}",
                (n - 1).min(d)
            )));
        }
        let mean = features.column_means();
        let mut centered = features.clone();
        for i in 0..n {
            for (v, m) in centered.row_mut(i).iter_mut().zip(&mean) {
                *v -= m;
            }
        }
        let total_variance: f64 =
            centered.as_slice().iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64;
        if total_variance <= 0.0 {
            return Err(Error::ZeroVariance);
        }

        let (mut components, mut values) = if d <= n {
            covariance_route(&centered, k)
        } else {
            gram_route(&centered, k).unwrap_or_else(|| covariance_route(&centered, k))
        };

        for i in 0..k {
            orient(components.row_mut(i));
        }
        for v in &mut values {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Ok(PcaModel {
            mean,
            components,
            explained_variance: values,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.input_dim(), x.len())?;
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok(self
            .components
            .iter_rows()
            .map(|c| dot(c, &centered))
            .collect())
    }

    pub fn transform_matrix(&self, x: &Matrix<f64>) -> Result<Matrix<f64>> {
        Error::check_dim(self.input_dim(), x.ncols())?;
        let mut out = Matrix::zeros(x.nrows(), self.output_dim());
        for (i, row) in x.iter_rows().enumerate() {
            out.row_mut(i).copy_from_slice(&self.transform(row)?);
        }
        Ok(out)
    }

    /// Maps a projected vector back into input space.
    pub fn inverse_transform(&self, y: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.output_dim(), y.len())?;
        let mut x = self.mean.clone();
        for (c, &w) in self.components.iter_rows().zip(y) {
            for (xi, ci) in x.iter_mut().zip(c) {
                *xi += w * ci;
            }
        }
        Ok(x)
    }
}

fn covariance_route(centered: &Matrix<f64>, k: usize) -> (Matrix<f64>, Vec<f64>) {
    let n = centered.nrows();
    let d = centered.ncols();
    let mut cov = Matrix::zeros(d, d);
    for row in centered.iter_rows() {
        for i in 0..d {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            for j in 0..=i {
                cov[(i, j)] += ri * row[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in 0..=i {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let eig = symmetric_eigen(&cov);
    let mut components = Matrix::zeros(k, d);
    for i in 0..k {
        components.row_mut(i).copy_from_slice(eig.vectors.row(i));
    }
    (components, eig.values[..k].to_vec())
}

/// Eigenvectors of `X X^T / (n - 1)` mapped through `X^T`. Returns `None` if
/// any of the leading `k` eigenvalues is numerically zero, since those
/// directions cannot be recovered from the Gram matrix.
fn gram_route(centered: &Matrix<f64>, k: usize) -> Option<(Matrix<f64>, Vec<f64>)> {
    let n = centered.nrows();
    let d = centered.ncols();
    let denom = (n - 1) as f64;
    let mut gram = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = dot(centered.row(i), centered.row(j)) / denom;
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let eig = symmetric_eigen(&gram);
    let top = eig.values[0];
    if eig.values[..k].iter().any(|&v| v <= top * 1e-12) {
        return None;
    }
    let mut components = Matrix::zeros(k, d);
    for c in 0..k {
        let u = eig.vectors.row(c);
        let row = components.row_mut(c);
        for (i, &ui) in u.iter().enumerate() {
            for (r, x) in row.iter_mut().zip(centered.row(i)) {
                *r += ui * x;
            }
        }
        let norm = sqrt(dot(row, row));
        row.iter_mut().for_each(|r| *r /= norm);
    }
    Some((components, eig.values[..k].to_vec()))
}

fn orient(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if abs(*x) > abs(v[best]) {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn line_y_equals_x() {
        let pts = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let data: Vec<f64> = pts.iter().flat_map(|&t| [t, t]).collect();
        let m = Matrix::from_vec(5, 2, data).unwrap();
        let pca = PcaModel::fit(&m, 1).unwrap();
        // projection of (c, c) from mean 0 is c * sqrt(2)
        let y = pca.transform(&[1.0, 1.0]).unwrap();
        assert!((y[0] - 2f64.sqrt()).abs() < 1e-12);
        let y = pca.transform(&[-3.0, -3.0]).unwrap();
        assert!((y[0] + 3.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn second_eigenvalue_zero_on_line() {
        let pts = [-2.0, -1.0, 0.5, 1.0, 3.0];
        let data: Vec<f64> = pts.iter().flat_map(|&t| [t, t]).collect();
        let m = Matrix::from_vec(5, 2, data).unwrap();
        let pca = PcaModel::fit(&m, 2).unwrap();
        assert!(pca.explained_variance[1].abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let one = Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        assert!(matches!(PcaModel::fit(&one, 1), Err(Error::TooFewSamples { .. })));
        let two = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 5.0]).unwrap();
        assert!(matches!(PcaModel::fit(&two, 2), Err(Error::InvalidParameter(_))));
        assert!(matches!(PcaModel::fit(&two, 0), Err(Error::InvalidParameter(_))));
        let flat = Matrix::from_vec(3, 2, vec![1.0; 6]).unwrap();
        assert!(matches!(PcaModel::fit(&flat, 1), Err(Error::ZeroVariance)));
        let pca = PcaModel::fit(&two, 1).unwrap();
        assert!(matches!(pca.transform(&[1.0]), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn mean_maps_to_zero_and_component_to_unit() {
        let data = vec![1.0, 0.0, 2.0, 3.0, 1.0, 1.0, 0.0, 2.0, 5.0, 4.0, 2.0, 7.0];
        let m = Matrix::from_vec(4, 3, data).unwrap();
        let pca = PcaModel::fit(&m, 2).unwrap();
        let z = pca.transform(&pca.mean).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-12));
        let x: Vec<f64> = pca.mean.iter().zip(pca.components.row(0)).map(|(a, b)| a + b).collect();
        let y = pca.transform(&x).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-12 && y[1].abs() < 1e-12);
    }

    #[test]
    fn gram_and_covariance_routes_agree() {
        // 5 samples in 8 dims: fit uses the Gram route.
        let mut data = Vec::new();
        for i in 0..5 {
            for j in 0..8 {
                data.push(((i * 13 + j * 7) % 17) as f64 / 4.0 + (i * j) as f64 * 0.1);
            }
        }
        let m = Matrix::from_vec(5, 8, data).unwrap();
        let gram = PcaModel::fit(&m, 3).unwrap();
        let mut centered = m.clone();
        for i in 0..5 {
            for (v, mu) in centered.row_mut(i).iter_mut().zip(&gram.mean) {
                *v -= mu;
            }
        }
        let (mut comps, vals) = covariance_route(&centered, 3);
        for i in 0..3 {
            orient(comps.row_mut(i));
            assert!((vals[i] - gram.explained_variance[i]).abs() < 1e-9 * vals[0]);
            for j in 0..8 {
                assert!((comps[(i, j)] - gram.components[(i, j)]).abs() < 1e-8);
            }
        }
    }
}
