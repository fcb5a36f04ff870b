//! Model directories.
//!
//! ```text
//! manifest.json        versions, detector and grid config, per-cell
//!                      preprocessing, blob hashes, model hash
//! grid_bank.bin        header + bincode GridBank (cell detectors, with their
//!                      PCA projections and PQ codebooks)
//! recount_model.bin    header + bincode RecountModel
//! ```
//!
//! Every blob starts with `RCNTBLOB`, then the format major and minor
//! version as little-endian u32. The manifest stores the SHA-256 of each
//! blob file; the model hash is the SHA-256 of the blob hashes in manifest
//! order, so it identifies the trained model independently of file paths.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use recount_core::grid::{BankConfig, Cell, GridBank, GridSpec};
use recount_core::novelty::{Detector, NnModel, Preprocess};
use recount_core::pack::ConceptTask;
use recount_core::recounting::RecountModel;

use crate::error::{Error, Result};
use crate::pack_io::{read_json, write_json};

pub const FORMAT_MAJOR: u32 = 1;
pub const FORMAT_MINOR: u32 = 0;
pub const BLOB_MAGIC: &[u8; 8] = b"RCNTBLOB";
pub const MANIFEST: &str = "manifest.json";
pub const BANK_BLOB: &str = "grid_bank.bin";
pub const RECOUNT_BLOB: &str = "recount_model.bin";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDescriptor {
    pub row: usize,
    pub col: usize,
    pub trained: bool,
    pub samples: Option<usize>,
    /// e.g. `pca 64->16`, `identity 64`.
    pub preprocess: Option<String>,
    /// e.g. `nn pq 16x8 (128 bits)`, `ocsvm 37 sv`.
    pub detector: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format_major: u32,
    pub format_minor: u32,
    pub engine_version: String,
    pub feature_dim: usize,
    pub grid: GridSpec,
    pub bank: BankConfig,
    pub tasks: Vec<ConceptTask>,
    pub cells: Vec<CellDescriptor>,
    pub blobs: Vec<BlobEntry>,
    pub model_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub bank: GridBank,
    pub recount: RecountModel,
    pub tasks: Vec<ConceptTask>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn model_hash(blobs: &[BlobEntry]) -> String {
    let mut h = Sha256::new();
    for b in blobs {
        h.update(b.name.as_bytes());
        h.update([0]);
        h.update(b.sha256.as_bytes());
        h.update([0]);
    }
    hex::encode(h.finalize())
}

fn encode_blob<T: Serialize>(name: &str, value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(BLOB_MAGIC);
    out.extend_from_slice(&FORMAT_MAJOR.to_le_bytes());
    out.extend_from_slice(&FORMAT_MINOR.to_le_bytes());
    bincode::serialize_into(&mut out, value).map_err(|e| Error::Blob {
        name: name.into(),
        reason: e.to_string(),
    })?;
    Ok(out)
}

fn decode_blob<T: serde::de::DeserializeOwned>(name: &str, bytes: &[u8]) -> Result<T> {
    let bad = |reason: String| Error::Blob {
        name: name.into(),
        reason,
    };
    if bytes.len() < 16 || &bytes[..8] != BLOB_MAGIC {
        return Err(bad("missing blob header".into()));
    }
    let major = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if major != FORMAT_MAJOR {
        return Err(bad(format!(
            "format major version {major}, this build reads {FORMAT_MAJOR}"
        )));
    }
    bincode::deserialize(&bytes[16..]).map_err(|e| bad(e.to_string()))
}

fn describe_cells(bank: &GridBank) -> Vec<CellDescriptor> {
    bank.cells
        .iter()
        .enumerate()
        .map(|(i, cell)| {
            let (row, col) = (i / bank.spec.cols, i % bank.spec.cols);
            match cell {
                Cell::Empty { samples } => CellDescriptor {
                    row,
                    col,
                    trained: false,
                    samples: Some(*samples),
                    preprocess: None,
                    detector: None,
                },
                Cell::Fitted { model, .. } => {
                    let preprocess = match &model.preprocess {
                        Preprocess::Identity => format!("identity {}", model.input_dim),
                        Preprocess::Pca(p) => format!("pca {}->{}", p.input_dim(), p.output_dim()),
                    };
                    let detector = match &model.detector {
                        Detector::Nn(NnModel::Exact { points }) => format!("nn exact {} points", points.nrows()),
                        Detector::Nn(NnModel::Compressed { codebook, codes, .. }) => format!(
                            "nn pq {}x{} ({} bits), {} codes",
                            codebook.subspaces,
                            codebook.bits,
                            codebook.code_bits(),
                            codes.len()
                        ),
                        Detector::Ocsvm(m) => format!("ocsvm {} sv, rho {}", m.support_vectors.nrows(), m.rho),
                        Detector::Kde(m) => format!("kde {} points", m.points.nrows()),
                    };
                    CellDescriptor {
                        row,
                        col,
                        trained: true,
                        samples: None,
                        preprocess: Some(preprocess),
                        detector: Some(detector),
                    }
                }
            }
        })
        .collect()
}

/// Writes the model and returns its manifest.
pub fn save_model(dir: &Path, model: &TrainedModel) -> Result<ModelManifest> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut blobs = Vec::new();
    for (name, bytes) in [
        (BANK_BLOB, encode_blob(BANK_BLOB, &model.bank)?),
        (RECOUNT_BLOB, encode_blob(RECOUNT_BLOB, &model.recount)?),
    ] {
        let path = dir.join(name);
        fs::write(&path, &bytes).map_err(Error::io(&path))?;
        blobs.push(BlobEntry {
            name: name.into(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
    }
    let manifest = ModelManifest {
        format_major: FORMAT_MAJOR,
        format_minor: FORMAT_MINOR,
        engine_version: env!("CARGO_PKG_VERSION").into(),
        feature_dim: model.bank.input_dim,
        grid: model.bank.spec,
        bank: model.bank.config,
        tasks: model.tasks.clone(),
        cells: describe_cells(&model.bank),
        model_hash: model_hash(&blobs),
        blobs,
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Loads a model, verifying versions and every blob hash.
pub fn load_model(dir: &Path) -> Result<(TrainedModel, ModelManifest)> {
    let manifest_path = dir.join(MANIFEST);
    let manifest: ModelManifest = read_json(&manifest_path)?;
    if manifest.format_major != FORMAT_MAJOR {
        return Err(Error::Version {
            path: manifest_path,
            found: manifest.format_major,
            supported: FORMAT_MAJOR,
        });
    }
    let expected_hash = model_hash(&manifest.blobs);
    if expected_hash != manifest.model_hash {
        return Err(Error::Hash {
            name: MANIFEST.into(),
            expected: manifest.model_hash.clone(),
            actual: expected_hash,
        });
    }
    let read = |name: &str| -> Result<Vec<u8>> {
        let entry = manifest
            .blobs
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::Blob {
                name: name.into(),
                reason: "not listed in manifest".into(),
            })?;
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(Error::io(&path))?;
        let actual = sha256_hex(&bytes);
        if actual != entry.sha256 {
            return Err(Error::Hash {
                name: name.into(),
                expected: entry.sha256.clone(),
                actual,
            });
        }
        Ok(bytes)
    };
    let bank: GridBank = decode_blob(BANK_BLOB, &read(BANK_BLOB)?)?;
    let recount: RecountModel = decode_blob(RECOUNT_BLOB, &read(RECOUNT_BLOB)?)?;
    Ok((
        TrainedModel {
            bank,
            recount,
            tasks: manifest.tasks.clone(),
        },
        manifest,
    ))
}
