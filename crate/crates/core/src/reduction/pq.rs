//! Product quantization with asymmetric distance computation (ADC).
//!
//! A `d`-dimensional vector is cut into `m` contiguous subvectors of
//! `d / m` dimensions. Each subspace has its own codebook of `2^bits`
//! centroids trained with k-means, and a vector is stored as `m` centroid
//! indices: `m * bits` bits in total. Queries stay uncompressed; their
//! distance to a code is the sum of per-subspace squared distances to the
//! coded centroids.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::sq_dist;
use crate::matrix::Matrix;
use crate::reduction::kmeans::{nearest, KMeans};
use crate::rng::derive_seed;

pub const MAX_BITS: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PqConfig {
    pub subspaces: usize,
    pub bits: u32,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for PqConfig {
    /// 16 subspaces of 8 bits: 128-bit codes, one byte per subspace.
    fn default() -> Self {
        PqConfig {
            subspaces: 16,
            bits: 8,
            iterations: 25,
            seed: 0,
        }
    }
}

impl PqConfig {
    pub fn code_bits(&self) -> usize {
        self.subspaces * self.bits as usize
    }
}

/// One centroid index per subspace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PqCode(pub Vec<u16>);

impl PqCode {
    /// Packs the indices into `ceil(len * bits / 8)` bytes, least
    /// significant bit first.
    pub fn to_packed(&self, bits: u32) -> Vec<u8> {
        let total = self.0.len() * bits as usize;
        let mut out = alloc::vec![0u8; total.div_ceil(8)];
        let mut pos = 0usize;
        for &idx in &self.0 {
            for b in 0..bits {
                if (idx >> b) & 1 == 1 {
                    out[pos / 8] |= 1 << (pos % 8);
                }
                pos += 1;
            }
        }
        out
    }

    pub fn from_packed(bytes: &[u8], len: usize, bits: u32) -> Result<Self> {
        let needed = (len * bits as usize).div_ceil(8);
        Error::check_dim(needed, bytes.len())?;
        let mut pos = 0usize;
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            let mut idx = 0u16;
            for b in 0..bits {
                if (bytes[pos / 8] >> (pos % 8)) & 1 == 1 {
                    idx |= 1 << b;
                }
                pos += 1;
            }
            out.push(idx);
        }
        Ok(PqCode(out))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PqCodebook {
    pub subspaces: usize,
    pub bits: u32,
    pub dim: usize,
    /// One `2^bits x (dim / subspaces)` centroid matrix per subspace.
    pub centroids: Vec<Matrix<f64>>,
}

/// Per-query lookup table of squared subspace distances to every centroid.
#[derive(Debug, Clone)]
pub struct AdcTable {
    k: usize,
    table: Vec<f64>,
}

impl AdcTable {
    pub fn distance(&self, code: &PqCode) -> f64 {
        code.0
            .iter()
            .enumerate()
            .map(|(s, &c)| self.table[s * self.k + c as usize])
            .sum()
    }
}

/// Per-subspace k-means error histories from training.
#[derive(Debug, Clone, Default)]
pub struct PqTrainReport {
    pub error_history: Vec<Vec<f64>>,
}

impl PqTrainReport {
    /// Total quantization error after each iteration, summed over subspaces.
    /// Subspaces that stopped early carry their final value forward.
    pub fn total_history(&self) -> Vec<f64> {
        let len = self.error_history.iter().map(Vec::len).max().unwrap_or(0);
        (0..len)
            .map(|t| {
                self.error_history
                    .iter()
                    .map(|h| h[t.min(h.len() - 1)])
                    .sum()
            })
            .collect()
    }
}

impl PqCodebook {
    pub fn train(data: &Matrix<f64>, config: &PqConfig) -> Result<Self> {
        Self::train_with_report(data, config).map(|(cb, _)| cb)
    }

    pub fn train_with_report(data: &Matrix<f64>, config: &PqConfig) -> Result<(Self, PqTrainReport)> {
        let d = data.ncols();
        let m = config.subspaces;
        if m == 0 || d % m != 0 {
            return Err(Error::invalid(alloc::format!(
                "{m} subspaces do not divide dimension {d}"
            )));
        }
        if config.bits > MAX_BITS {
            return Err(Error::invalid(alloc::format!(
                "{} bits per subspace exceeds {MAX_BITS}",
                config.bits
            )));
        }
        if data.nrows() == 0 {
            return Err(Error::Empty("PQ training data"));
        }
        let k = 1usize << config.bits;
        if data.nrows() < k {
            log::warn!(
                "training PQ with {} vectors for {k} centroids per subspace",
                data.nrows()
            );
        }
        let sub = d / m;
        let mut centroids = Vec::with_capacity(m);
        let mut report = PqTrainReport::default();
        for s in 0..m {
            let block = data.column_block(s * sub, sub);
            let km = KMeans::fit(&block, k, config.iterations, derive_seed(config.seed, s as u64))?;
            centroids.push(km.centroids);
            report.error_history.push(km.error_history);
        }
        Ok((
            PqCodebook {
                subspaces: m,
                bits: config.bits,
                dim: d,
                centroids,
            },
            report,
        ))
    }

    pub fn centroids_per_subspace(&self) -> usize {
        1 << self.bits
    }

    pub fn sub_dim(&self) -> usize {
        self.dim / self.subspaces
    }

    pub fn code_bits(&self) -> usize {
        self.subspaces * self.bits as usize
    }

    fn sub<'a>(&self, x: &'a [f64], s: usize) -> &'a [f64] {
        let w = self.sub_dim();
        &x[s * w..(s + 1) * w]
    }

    pub fn encode(&self, x: &[f64]) -> Result<PqCode> {
        Error::check_dim(self.dim, x.len())?;
        Ok(PqCode(
            (0..self.subspaces)
                .map(|s| nearest(&self.centroids[s], self.sub(x, s)).0 as u16)
                .collect(),
        ))
    }

    pub fn decode(&self, code: &PqCode) -> Result<Vec<f64>> {
        self.check_code(code)?;
        let mut out = Vec::with_capacity(self.dim);
        for (s, &c) in code.0.iter().enumerate() {
            out.extend_from_slice(self.centroids[s].row(c as usize));
        }
        Ok(out)
    }

    fn check_code(&self, code: &PqCode) -> Result<()> {
        Error::check_dim(self.subspaces, code.0.len())?;
        let k = self.centroids_per_subspace();
        if let Some(&bad) = code.0.iter().find(|&&c| c as usize >= k) {
            return Err(Error::invalid(alloc::format!("code index {bad} >= {k}")));
        }
        Ok(())
    }

    pub fn adc_table(&self, query: &[f64]) -> Result<AdcTable> {
        Error::check_dim(self.dim, query.len())?;
        let k = self.centroids_per_subspace();
        let mut table = Vec::with_capacity(self.subspaces * k);
        for s in 0..self.subspaces {
            let q = self.sub(query, s);
            table.extend(self.centroids[s].iter_rows().map(|c| sq_dist(q, c)));
        }
        Ok(AdcTable { k, table })
    }

    /// Squared distance from an uncompressed query to a coded vector.
    pub fn adc_distance(&self, query: &[f64], code: &PqCode) -> Result<f64> {
        Error::check_dim(self.dim, query.len())?;
        self.check_code(code)?;
        Ok(code
            .0
            .iter()
            .enumerate()
            .map(|(s, &c)| sq_dist(self.sub(query, s), self.centroids[s].row(c as usize)))
            .sum())
    }

    /// Sum of squared reconstruction errors over the rows of `data`.
    pub fn quantization_error(&self, data: &Matrix<f64>) -> Result<f64> {
        let mut err = 0.0;
        for x in data.iter_rows() {
            let code = self.encode(x)?;
            err += sq_dist(x, &self.decode(&code)?);
        }
        Ok(err)
    }
}
