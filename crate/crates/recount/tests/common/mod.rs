#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use recount::pack_io::write_pack;
use recount_core::pack::{BBox, ConceptTask, FeaturePack, Manifest, RegionRecord, VideoInfo, FORMAT_VERSION};
use recount_core::synth::{generate, SynthConfig};
use recount_core::Matrix;

pub fn recount_cmd() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_recount"));
    cmd.env_remove("RECOUNT_MODEL_DIR").env_remove("RUST_LOG");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    recount_cmd().args(args).output().expect("spawn recount")
}

/// Runs a command that must succeed and returns its stdout.
pub fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "recount {args:?} failed with {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small synthbench config that trains in well under a second.
pub fn small_config(seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        train_frames: 40,
        test_frames: 30,
        ..SynthConfig::default()
    }
}

/// Writes `dir/train` and `dir/test` and returns both paths.
pub fn write_synth(dir: &Path, cfg: &SynthConfig) -> (PathBuf, PathBuf) {
    let out = generate(cfg).unwrap();
    let (train, test) = (dir.join("train"), dir.join("test"));
    write_pack(&train, &out.train).unwrap();
    write_pack(&test, &out.test).unwrap();
    (train, test)
}

/// Pack of `n` records with features `seed + i * d + j` and one two-category task.
pub fn plain_pack(n: usize, d: usize, seed: f32) -> FeaturePack {
    let features = (0..n * d).map(|k| seed + k as f32 * 0.25).collect();
    let scores = (0..n * 2).map(|k| (k % 5) as f32 / 5.0).collect();
    FeaturePack {
        manifest: Manifest {
            version: FORMAT_VERSION,
            feature_dim: d,
            videos: vec![VideoInfo {
                video_id: "v".into(),
                width: 64,
                height: 48,
            }],
            tasks: vec![ConceptTask::new("object", &["person", "car"])],
            record_count: n,
        },
        records: (0..n)
            .map(|i| RegionRecord {
                video_id: "v".into(),
                frame_index: i as u64 / 3,
                bbox: BBox::new((i % 3) as f64 * 10.0, 4.0, 8.0, 8.0),
                feature_offset: i,
                score_offsets: vec![i],
            })
            .collect(),
        features: Matrix::from_vec(n, d, features).unwrap(),
        scores: vec![Matrix::from_vec(n, 2, scores).unwrap()],
        labels: None,
    }
}
