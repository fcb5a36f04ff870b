//! Lloyd's k-means with k-means++ seeding, used to train PQ sub-codebooks.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::math::sq_dist;
use crate::matrix::Matrix;
use crate::rng::seeded;

#[derive(Debug, Clone)]
pub struct KMeans {
    /// `k x d`.
    pub centroids: Matrix<f64>,
    /// Final assignment of every training row.
    pub assignments: Vec<usize>,
    /// Sum of squared distances to the assigned centroid, recorded after
    /// every assignment step. Non-increasing.
    pub error_history: Vec<f64>,
}

/// Index of the nearest row of `centroids`, ties to the lowest index.
pub fn nearest(centroids: &Matrix<f64>, x: &[f64]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter_rows().enumerate() {
        let d = sq_dist(c, x);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    (best, best_d)
}

impl KMeans {
    /// Clusters the rows of `data` into `k` groups with at most `iterations`
    /// Lloyd updates. Empty clusters are re-seeded with the point farthest
    /// from its centroid.
    pub fn fit(data: &Matrix<f64>, k: usize, iterations: usize, seed: u64) -> Result<Self> {
        let n = data.nrows();
        if n == 0 {
            return Err(Error::Empty("k-means training data"));
        }
        if k == 0 {
            return Err(Error::invalid("k-means needs k >= 1"));
        }
        if iterations == 0 {
            return Err(Error::invalid("k-means needs at least one iteration"));
        }
        let d = data.ncols();
        let mut centroids = plus_plus_init(data, k, seed);
        let mut assignments = vec![usize::MAX; n];
        let mut error_history = Vec::with_capacity(iterations + 1);

        for _ in 0..iterations {
            let mut changed = false;
            let mut err = 0.0;
            for (i, x) in data.iter_rows().enumerate() {
                let (j, dist) = nearest(&centroids, x);
                if assignments[i] != j {
                    assignments[i] = j;
                    changed = true;
                }
                err += dist;
            }
            error_history.push(err);
            if !changed {
                return Ok(KMeans {
                    centroids,
                    assignments,
                    error_history,
                });
            }

            let mut sums = Matrix::zeros(k, d);
            let mut counts = vec![0usize; k];
            for (x, &j) in data.iter_rows().zip(&assignments) {
                counts[j] += 1;
                for (s, v) in sums.row_mut(j).iter_mut().zip(x) {
                    *s += v;
                }
            }
            for j in 0..k {
                if counts[j] > 0 {
                    let c = counts[j] as f64;
                    for (dst, s) in centroids.row_mut(j).iter_mut().zip(sums.row(j)) {
                        *dst = s / c;
                    }
                }
            }
            reseed_empty(data, &mut centroids, &assignments, &counts);
        }

        let mut err = 0.0;
        for (i, x) in data.iter_rows().enumerate() {
            let (j, dist) = nearest(&centroids, x);
            assignments[i] = j;
            err += dist;
        }
        error_history.push(err);
        Ok(KMeans {
            centroids,
            assignments,
            error_history,
        })
    }
}

fn plus_plus_init(data: &Matrix<f64>, k: usize, seed: u64) -> Matrix<f64> {
    let n = data.nrows();
    let mut rng = seeded(seed);
    let mut centroids = Matrix::zeros(k, data.ncols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(data.row(first));
    let mut min_d: Vec<f64> = data.iter_rows().map(|x| sq_dist(x, data.row(first))).collect();

    for c in 1..k {
        let total: f64 = min_d.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in min_d.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(data.row(pick));
        for (m, x) in min_d.iter_mut().zip(data.iter_rows()) {
            let dist = sq_dist(x, data.row(pick));
            if dist < *m {
                *m = dist;
            }
        }
    }
    centroids
}

fn reseed_empty(data: &Matrix<f64>, centroids: &mut Matrix<f64>, assignments: &[usize], counts: &[usize]) {
    let empty: Vec<usize> = (0..counts.len()).filter(|&j| counts[j] == 0).collect();
    if empty.is_empty() {
        return;
    }
    let mut dist: Vec<(f64, usize)> = data
        .iter_rows()
        .zip(assignments)
        .enumerate()
        .map(|(i, (x, &j))| (sq_dist(x, centroids.row(j)), i))
        .collect();
    dist.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for (slot, &j) in empty.iter().enumerate() {
        let Some(&(d, i)) = dist.get(slot) else { break };
        if d <= 0.0 {
            break;
        }
        centroids.row_mut(j).copy_from_slice(data.row(i));
    }
}
