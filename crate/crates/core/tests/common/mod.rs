#![allow(dead_code)]

pub mod oracles;

use rand::Rng;
use rand_distr::StandardNormal;
use recount_core::rng::seeded;
use recount_core::Matrix;

pub fn gaussian_matrix(seed: u64, rows: usize, cols: usize) -> Matrix<f64> {
    let mut rng = seeded(seed);
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn uniform_vec(seed: u64, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = seeded(seed);
    (0..len).map(|_| rng.random_range(lo..hi)).collect()
}

/// `clusters` centres spread with standard deviation `spread`, points at
/// standard deviation `scale` around a random centre.
pub fn clustered(seed: u64, n: usize, d: usize, clusters: usize, scale: f64, spread: f64) -> Matrix<f64> {
    let mut rng = seeded(seed);
    let centres: Vec<Vec<f64>> = (0..clusters)
        .map(|_| (0..d).map(|_| spread * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let c = &centres[rng.random_range(0..clusters)];
        for v in c {
            data.push(v + scale * rng.sample::<f64, _>(StandardNormal));
        }
    }
    Matrix::from_vec(n, d, data).unwrap()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}
