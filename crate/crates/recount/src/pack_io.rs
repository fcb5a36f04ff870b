//! On-disk feature packs.
//!
//! A pack is a directory:
//!
//! ```text
//! manifest.json         version, feature_dim, videos, tasks, record_count
//! records.jsonl         one RegionRecord per line, record order
//! features.bin          n x feature_dim little-endian f32, row-major
//! scores_<task>.bin     n x |categories| little-endian f32, row-major
//! labels.jsonl          optional; one {"kind": "region" | "frame", ...} per line
//! ```

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use recount_core::pack::{FeaturePack, LabelEntry, Labels, Manifest, PackWarning, RegionRecord, FORMAT_VERSION};
use recount_core::Matrix;

use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const RECORDS: &str = "records.jsonl";
pub const FEATURES: &str = "features.bin";
pub const LABELS: &str = "labels.jsonl";

pub fn score_file(task: &str) -> String {
    format!("scores_{task}.bin")
}

fn check_task_name(name: &str) -> Result<()> {
    let ok = !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(Error::Format(format!(
            "task name {name:?} must be non-empty ASCII letters, digits, '_' or '-'"
        )))
    }
}

pub fn write_matrix(path: &Path, m: &Matrix<f32>) -> Result<()> {
    let mut bytes = Vec::with_capacity(m.as_slice().len() * 4);
    for v in m.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(Error::io(path))
}

pub fn read_matrix(path: &Path, rows: usize, cols: usize) -> Result<Matrix<f32>> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    let expected = (rows * cols * 4) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::Size {
            path: path.into(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Matrix::from_vec(rows, cols, data)?)
}

pub fn write_json_lines<T: serde::Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let file = fs::File::create(path).map_err(Error::io(path))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(Error::json(path, None))?;
        w.write_all(b"\n").map_err(Error::io(path))?;
    }
    w.flush().map_err(Error::io(path))
}

/// Reads one JSON value per non-blank line.
pub fn read_json_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(Error::io(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(Error::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(Error::json(path, Some(i + 1)))?);
    }
    Ok(out)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::json(path, None))?;
    text.push('\n');
    fs::write(path, text).map_err(Error::io(path))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(Error::json(path, None))
}

/// Validates and writes a pack. Scores a hair outside `[0, 1]` are clamped
/// first; anything further out is rejected.
pub fn write_pack(dir: &Path, pack: &FeaturePack) -> Result<Vec<PackWarning>> {
    let mut pack = pack.clone();
    pack.clamp_scores();
    let warnings = pack.validate()?;
    for t in &pack.manifest.tasks {
        check_task_name(&t.name)?;
    }
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    write_json(&dir.join(MANIFEST), &pack.manifest)?;
    write_json_lines(&dir.join(RECORDS), &pack.records)?;
    write_matrix(&dir.join(FEATURES), &pack.features)?;
    for (t, s) in pack.manifest.tasks.iter().zip(&pack.scores) {
        write_matrix(&dir.join(score_file(&t.name)), s)?;
    }
    let labels_path = dir.join(LABELS);
    match &pack.labels {
        Some(labels) => write_json_lines(&labels_path, labels.entries())?,
        None if labels_path.exists() => fs::remove_file(&labels_path).map_err(Error::io(&labels_path))?,
        None => {}
    }
    for w in &warnings {
        log::warn!("{}: {w}", dir.display());
    }
    Ok(warnings)
}

pub fn read_pack(dir: &Path) -> Result<(FeaturePack, Vec<PackWarning>)> {
    let manifest_path = dir.join(MANIFEST);
    let manifest: Manifest = read_json(&manifest_path)?;
    if manifest.version != FORMAT_VERSION {
        return Err(Error::Version {
            path: manifest_path,
            found: manifest.version,
            supported: FORMAT_VERSION,
        });
    }
    for t in &manifest.tasks {
        check_task_name(&t.name)?;
    }
    let n = manifest.record_count;
    let records: Vec<RegionRecord> = read_json_lines(&dir.join(RECORDS))?;
    let features = read_matrix(&dir.join(FEATURES), n, manifest.feature_dim)?;
    let scores = manifest
        .tasks
        .iter()
        .map(|t| read_matrix(&dir.join(score_file(&t.name)), n, t.score_dim()))
        .collect::<Result<Vec<_>>>()?;
    let labels_path = dir.join(LABELS);
    let labels = if labels_path.exists() {
        Some(Labels::from_entries(read_json_lines::<LabelEntry>(&labels_path)?))
    } else {
        None
    };
    let pack = FeaturePack {
        manifest,
        records,
        features,
        scores,
        labels,
    };
    let warnings = pack.validate()?;
    for w in &warnings {
        log::warn!("{}: {w}", dir.display());
    }
    Ok((pack, warnings))
}
