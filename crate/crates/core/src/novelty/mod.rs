//! Novelty detectors fitted on normal features only.
//!
//! Three detectors sit behind [`NoveltyModel`]:
//!
//! * nearest neighbour, scoring the distance to the closest training sample
//!   (PQ-compressed by default, exact on request);
//! * ν-one-class SVM with an RBF kernel, scoring the signed distance outside
//!   the learned support;
//! * Gaussian KDE with Scott bandwidths, scoring the reciprocal density.
//!
//! The kernel and density detectors run on a PCA projection (16 dimensions
//! by default) learned from the same training features.

pub mod kde;
pub mod nn;
pub mod ocsvm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::reduction::pca::PcaModel;
use crate::reduction::pq::PqConfig;

pub use kde::{scott_bandwidth, KdeModel};
pub use nn::NnModel;
pub use ocsvm::{OcSvmModel, SolverParams};

pub const DEFAULT_PCA_DIM: usize = 16;
pub const DEFAULT_GAMMA: f64 = 0.001;
pub const DEFAULT_NU: f64 = 0.1;

/// RBF kernel parameterisation. `Gamma(g)` is `exp(-g |a - b|^2)`;
/// `Width(s)` is `exp(-|a - b|^2 / (2 s^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelParam {
    Gamma(f64),
    Width(f64),
}

impl KernelParam {
    pub fn gamma(&self) -> f64 {
        match *self {
            KernelParam::Gamma(g) => g,
            KernelParam::Width(s) => 1.0 / (2.0 * s * s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NnMode {
    Exact,
    Compressed { pq: PqConfig, normalize: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorConfig {
    Nn {
        mode: NnMode,
    },
    Ocsvm {
        kernel: KernelParam,
        nu: f64,
        pca_dim: Option<usize>,
        solver: SolverParams,
    },
    Kde {
        pca_dim: Option<usize>,
    },
}

impl DetectorConfig {
    pub fn nn() -> Self {
        DetectorConfig::Nn {
            mode: NnMode::Compressed {
                pq: PqConfig::default(),
                normalize: false,
            },
        }
    }

    pub fn nn_exact() -> Self {
        DetectorConfig::Nn { mode: NnMode::Exact }
    }

    pub fn ocsvm() -> Self {
        DetectorConfig::Ocsvm {
            kernel: KernelParam::Gamma(DEFAULT_GAMMA),
            nu: DEFAULT_NU,
            pca_dim: Some(DEFAULT_PCA_DIM),
            solver: SolverParams::default(),
        }
    }

    pub fn kde() -> Self {
        DetectorConfig::Kde {
            pca_dim: Some(DEFAULT_PCA_DIM),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DetectorConfig::Nn { .. } => "nn",
            DetectorConfig::Ocsvm { .. } => "ocsvm",
            DetectorConfig::Kde { .. } => "kde",
        }
    }

    /// Smallest training set the detector can be fitted on.
    pub fn min_samples(&self) -> usize {
        match self {
            DetectorConfig::Nn { .. } => 1,
            _ => 2,
        }
    }

    fn pca_dim(&self) -> Option<usize> {
        match *self {
            DetectorConfig::Nn { .. } => None,
            DetectorConfig::Ocsvm { pca_dim, .. } | DetectorConfig::Kde { pca_dim } => pca_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preprocess {
    Identity,
    Pca(PcaModel),
}

impl Preprocess {
    pub fn apply(&self, x: &[f64]) -> Result<alloc::vec::Vec<f64>> {
        match self {
            Preprocess::Identity => Ok(x.to_vec()),
            Preprocess::Pca(p) => p.transform(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    Nn(NnModel),
    Ocsvm(OcSvmModel),
    Kde(KdeModel),
}

/// A fitted detector with its preprocessing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyModel {
    pub input_dim: usize,
    pub preprocess: Preprocess,
    pub detector: Detector,
}

impl NoveltyModel {
    /// Fits the configured detector on normal training features.
    ///
    /// The PCA target dimension is capped at `min(pca_dim, n - 1, d)`. If the
    /// training features have zero variance, PCA is skipped and the detector
    /// runs on raw features.
    pub fn fit(config: &DetectorConfig, features: &Matrix<f64>, seed: u64) -> Result<Self> {
        let n = features.nrows();
        let d = features.ncols();
        if n < config.min_samples() {
            return Err(Error::TooFewSamples {
                needed: config.min_samples(),
                got: n,
            });
        }

        let preprocess = match config.pca_dim() {
            Some(k) => {
                let k = k.min(n - 1).min(d);
                match PcaModel::fit(features, k) {
                    Ok(p) => Preprocess::Pca(p),
                    Err(Error::ZeroVariance) => {
                        log::warn!("training features have zero variance; skipping PCA");
                        Preprocess::Identity
                    }
                    Err(e) => return Err(e),
                }
            }
            None => Preprocess::Identity,
        };
        let reduced = match &preprocess {
            Preprocess::Identity => features.clone(),
            Preprocess::Pca(p) => p.transform_matrix(features)?,
        };

        let detector = match *config {
            DetectorConfig::Nn { mode } => Detector::Nn(match mode {
                NnMode::Exact => NnModel::fit_exact(&reduced)?,
                NnMode::Compressed { pq, normalize } => {
                    let pq = PqConfig {
                        seed: crate::rng::derive_seed(pq.seed, seed),
                        ..pq
                    };
                    NnModel::fit_compressed(&reduced, &pq, normalize)?
                }
            }),
            DetectorConfig::Ocsvm {
                kernel, nu, solver, ..
            } => Detector::Ocsvm(OcSvmModel::fit_with(&reduced, kernel.gamma(), nu, &solver)?),
            DetectorConfig::Kde { .. } => Detector::Kde(KdeModel::fit(&reduced)?),
        };
        Ok(NoveltyModel {
            input_dim: d,
            preprocess,
            detector,
        })
    }

    /// Anomaly score `z(x)`; larger is more anomalous.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        Error::check_dim(self.input_dim, x.len())?;
        let y = self.preprocess.apply(x)?;
        match &self.detector {
            Detector::Nn(m) => m.score(&y),
            Detector::Ocsvm(m) => m.score(&y),
            Detector::Kde(m) => m.score(&y),
        }
    }
}
