//! Feature reduction applied before detector training: PCA projection for
//! the density and kernel detectors, product quantization for the nearest
//! neighbour detector.

pub mod eigen;
pub mod kmeans;
pub mod pca;
pub mod pq;

pub use pca::PcaModel;
pub use pq::{AdcTable, PqCode, PqCodebook, PqConfig};
