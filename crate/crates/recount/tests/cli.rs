mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use common::{p, recount_cmd, run, run_ok, small_config, write_synth};
use recount::model::{load_model, ModelManifest};
use recount::pack_io::{read_pack, write_json_lines, write_pack};
use recount::report::{Detection, EvalReport};
use recount_core::novelty::{DetectorConfig, NnMode};
use recount_core::recounting::RecountRecord;

fn train_model(dir: &Path, pack: &Path, extra: &[&str]) -> serde_json::Value {
    let out = dir.join("model");
    let mut args = vec!["train", "--pack", p(pack), "--out", p(&out)];
    args.extend_from_slice(extra);
    serde_json::from_str(&run_ok(&args)).unwrap()
}

fn detections(args: &[&str]) -> Vec<Detection> {
    run_ok(args)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn train_defaults_use_3x4_grid_and_128_bit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = write_synth(dir.path(), &small_config(1));
    let printed = train_model(dir.path(), &train, &[]);
    let (model, manifest) = load_model(&dir.path().join("model")).unwrap();
    assert_eq!(printed["model_hash"], manifest.model_hash.as_str());
    assert_eq!((manifest.grid.rows, manifest.grid.cols), (3, 4));
    assert_eq!(printed["fitted_cells"], 12);
    match model.bank.config.detector {
        DetectorConfig::Nn {
            mode: NnMode::Compressed { pq, .. },
        } => assert_eq!((pq.subspaces, pq.bits, pq.code_bits()), (16, 8, 128)),
        other => panic!("default detector {other:?}"),
    }

    for det in ["ocsvm", "kde"] {
        let sub = dir.path().join(det);
        fs::create_dir_all(&sub).unwrap();
        train_model(&sub, &train, &["--detector", det]);
        let (_, m) = load_model(&sub.join("model")).unwrap();
        assert!(m.cells.iter().all(|c| c.preprocess.as_deref() == Some("pca 64->16")), "{det}");
    }
}

#[test]
fn one_by_one_grid_is_a_single_detector() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = write_synth(dir.path(), &small_config(2));
    train_model(dir.path(), &train, &["--grid", "1x1", "--detector", "kde"]);
    let (model, manifest) = load_model(&dir.path().join("model")).unwrap();
    assert_eq!(manifest.cells.len(), 1);
    assert_eq!(model.bank.cells.len(), 1);
}

#[test]
fn same_seed_gives_same_hash() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = write_synth(dir.path(), &small_config(3));
    let hash = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let v: serde_json::Value =
            serde_json::from_str(&run_ok(&["train", "--pack", p(&train), "--seed", seed, "--out", p(&out)])).unwrap();
        v["model_hash"].as_str().unwrap().to_string()
    };
    assert_eq!(hash("a", "5"), hash("b", "5"));
    assert_ne!(hash("a", "5"), hash("c", "6"));
}

#[test]
fn detect_thresholds_and_library_scores() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = write_synth(dir.path(), &small_config(4));
    train_model(dir.path(), &train, &["--detector", "kde"]);
    let model = dir.path().join("model");

    let none = detections(&["detect", "--pack", p(&test), "--model", p(&model), "--threshold", "inf"]);
    let all = detections(&["detect", "--pack", p(&test), "--model", p(&model), "--threshold", "-inf"]);
    let raw = detections(&["detect", "--pack", p(&test), "--model", p(&model)]);
    let (pack, _) = read_pack(&test).unwrap();
    assert_eq!(raw.len(), pack.len());
    assert!(none.iter().all(|d| d.detected == Some(false)));
    assert!(all.iter().all(|d| d.detected == Some(true)));
    assert!(raw.iter().all(|d| d.detected.is_none()));

    let (loaded, _) = load_model(&model).unwrap();
    for d in &raw {
        let r = &pack.records[d.record];
        let lib = loaded.bank.score(&pack.record_features_f64(d.record), &r.bbox).unwrap();
        assert_eq!(d.score, lib.score);
        assert_eq!(d.cell, [lib.row, lib.col]);
    }
    let keys: Vec<_> = raw.iter().map(|d| (d.video_id.clone(), d.frame_index, d.record)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn model_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = write_synth(dir.path(), &small_config(5));
    let model = dir.path().join("env-model");
    let out = recount_cmd()
        .args(["train", "--pack", p(&train), "--detector", "kde"])
        .env("RECOUNT_MODEL_DIR", &model)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = recount_cmd()
        .args(["detect", "--pack", p(&test)])
        .env("RECOUNT_MODEL_DIR", &model)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 360);
}

#[test]
fn config_file_supplies_missing_flags() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = write_synth(dir.path(), &small_config(6));
    let config = dir.path().join("train.json");
    fs::write(&config, r#"{"grid": "1x2", "detector": "kde", "rank_normalize": true, "seed": 4}"#).unwrap();
    let out = dir.path().join("model");
    run_ok(&["train", "--config", p(&config), "--pack", p(&train), "--grid", "2x2", "--out", p(&out)]);
    let (model, _) = load_model(&out).unwrap();
    assert_eq!((model.bank.spec.rows, model.bank.spec.cols), (2, 2));
    assert_eq!(model.bank.config.detector.name(), "kde");
    assert!(model.bank.config.rank_normalize);
    assert_eq!(model.bank.config.seed, 4);
}

#[test]
fn recount_modes() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = write_synth(dir.path(), &small_config(7));
    train_model(dir.path(), &train, &["--detector", "kde"]);
    let model = dir.path().join("model");
    let parse = |s: String| -> Vec<RecountRecord> { s.lines().map(|l| serde_json::from_str(l).unwrap()).collect() };

    let single = parse(run_ok(&["recount", "--pack", p(&test), "--model", p(&model)]));
    assert_eq!(single.len(), 360);
    assert!(single.iter().all(|r| r.tasks.len() == 3 && r.tasks.iter().all(|t| t.candidates.is_none())));

    let multi = parse(run_ok(&["recount", "--pack", p(&test), "--model", p(&model), "--multi"]));
    assert!(multi.iter().all(|r| r.tasks.iter().all(|t| t.candidates.is_some())));

    let none = parse(run_ok(&["recount", "--pack", p(&test), "--model", p(&model), "--threshold", "inf"]));
    assert!(none.is_empty());
}

fn perfect_detections(test: &Path, out: &Path) {
    let (pack, _) = read_pack(test).unwrap();
    let labels = pack.labels.as_ref().unwrap().regions_by_record(pack.len());
    let dets: Vec<Detection> = (0..pack.len())
        .map(|i| Detection {
            record: i,
            video_id: pack.records[i].video_id.clone(),
            frame_index: pack.records[i].frame_index,
            bbox: pack.records[i].bbox,
            score: if labels[i].and_then(|l| l.abnormal) == Some(true) { 1.0 } else { 0.0 },
            cell: [0, 0],
            untrained_cell: false,
            detected: None,
        })
        .collect();
    write_json_lines(out, &dets).unwrap();
}

#[test]
fn perfect_detections_score_auc_one_and_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (_, test) = write_synth(dir.path(), &small_config(8));
    let dets = dir.path().join("dets.jsonl");
    perfect_detections(&test, &dets);
    let report_path = dir.path().join("report.json");
    let csv = dir.path().join("roc.csv");
    let stdout = run_ok(&[
        "eval",
        "--detections",
        p(&dets),
        "--gt",
        p(&test),
        "--frame-level",
        "--pixel-level",
        "--unseen-ap",
        "--out",
        p(&report_path),
        "--roc-csv",
        p(&csv),
    ]);
    let report: EvalReport = serde_json::from_str(&stdout).unwrap();
    let saved: EvalReport = serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report, saved);
    let reencoded: EvalReport = serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
    assert_eq!(reencoded, report);

    let frame = report.frame_level.unwrap();
    assert_eq!(frame.auc, 1.0);
    assert_eq!(frame.eer, 0.0);
    assert_eq!(report.pixel_level.unwrap().auc, 1.0);
    assert_eq!(report.unseen_ap, Some(1.0));
    let csv = fs::read_to_string(csv).unwrap();
    assert!(csv.starts_with("curve,threshold,fpr,tpr\n"));
    assert!(csv.lines().skip(1).all(|l| l.starts_with("frame-level,") || l.starts_with("pixel-level,")));

    let text = run_ok(&["eval", "--detections", p(&dets), "--gt", p(&test), "--frame-level", "--format", "text"]);
    assert!(text.lines().nth(1).unwrap().starts_with("frame-level"));
}

#[test]
fn end_to_end_recounting_report() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = write_synth(dir.path(), &small_config(9));
    train_model(dir.path(), &train, &["--detector", "kde"]);
    let model = dir.path().join("model");
    let dets = dir.path().join("dets.jsonl");
    let recs = dir.path().join("recount.jsonl");
    run_ok(&["detect", "--pack", p(&test), "--model", p(&model), "--out", p(&dets)]);
    run_ok(&["recount", "--pack", p(&test), "--model", p(&model), "--multi", "--out", p(&recs)]);
    let report: EvalReport = serde_json::from_str(&run_ok(&[
        "eval",
        "--detections",
        p(&dets),
        "--gt",
        p(&test),
        "--frame-level",
        "--recount",
        p(&recs),
    ]))
    .unwrap();
    assert!(report.frame_level.unwrap().auc > 0.9);
    let tasks: Vec<&str> = report.recounting.iter().map(|t| t.task.as_str()).collect();
    assert_eq!(tasks, ["object", "action", "attribute"]);
    assert!(report.recounting.iter().all(|t| t.curve.auc > 0.9));
}

#[test]
fn split_outputs_pass_leakage_scan() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("fixture");
    run_ok(&["synth", "--split-fixture", "--seed", "3", "--out", p(&fixture)]);
    let out = dir.path().join("splits");
    let summary: serde_json::Value =
        serde_json::from_str(&run_ok(&["split", "--pack", p(&fixture), "--task", "object", "--seed", "1", "--out", p(&out)]))
            .unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 5);
    for k in 1..=5 {
        let base = out.join(format!("repeat_{k}"));
        let split: serde_json::Value = serde_json::from_str(&fs::read_to_string(base.join("split.json")).unwrap()).unwrap();
        let unseen: BTreeSet<String> = split["unseen"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_str().unwrap().to_string())
            .collect();
        assert_eq!(unseen.len(), 3);
        let (train, _) = read_pack(&base.join("train")).unwrap();
        let (test, _) = read_pack(&base.join("test")).unwrap();
        // Re-scan the annotations of every written training region.
        for r in &train.labels.as_ref().unwrap().regions {
            for c in &r.categories["object"] {
                assert!(!unseen.contains(c), "repeat {k}: {c} leaked into training");
            }
        }
        let images = |pack: &recount_core::pack::FeaturePack| pack.frames().len();
        assert!(images(&train).abs_diff(images(&test)) <= 1);
    }
}

#[test]
fn synth_cli_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let config = dir.path().join("synth.json");
    fs::write(&config, r#"{"train_frames": 10, "test_frames": 10}"#).unwrap();
    run_ok(&["synth", "--synth-config", p(&config), "--seed", "12", "--out", p(&a)]);
    run_ok(&["synth", "--synth-config", p(&config), "--seed", "12", "--out", p(&b)]);
    for sub in ["train", "test"] {
        for entry in fs::read_dir(a.join(sub)).unwrap() {
            let name = entry.unwrap().file_name();
            assert_eq!(
                fs::read(a.join(sub).join(&name)).unwrap(),
                fs::read(b.join(sub).join(&name)).unwrap(),
                "{sub}/{name:?}"
            );
        }
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = write_synth(dir.path(), &small_config(10));
    train_model(dir.path(), &train, &["--detector", "kde"]);
    let model = dir.path().join("model");
    let code = |args: &[&str]| run(args).status.code();

    // Unknown flag and bad values are usage errors.
    assert_eq!(code(&["train", "--pack", p(&train), "--bogus"]), Some(2));
    assert_eq!(code(&["train", "--pack", p(&train), "--grid", "0x4", "--out", "x"]), Some(2));

    // Invalid pack content.
    let (mut pack, _) = read_pack(&train).unwrap();
    let bad = dir.path().join("bad");
    write_pack(&bad, &pack).unwrap();
    let mut manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(bad.join("manifest.json")).unwrap()).unwrap();
    manifest["record_count"] = 7.into();
    fs::write(bad.join("manifest.json"), manifest.to_string()).unwrap();
    assert_eq!(code(&["detect", "--pack", p(&bad), "--model", p(&model)]), Some(2));

    // Pack and model disagree on feature dimension.
    pack.features = recount_core::Matrix::zeros(pack.len(), 32);
    pack.manifest.feature_dim = 32;
    let narrow = dir.path().join("narrow");
    write_pack(&narrow, &pack).unwrap();
    let out = run(&["detect", "--pack", p(&narrow), "--model", p(&model)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension mismatch"));

    // Ground truth without labels.
    let dets = dir.path().join("dets.jsonl");
    run_ok(&["detect", "--pack", p(&test), "--model", p(&model), "--out", p(&dets)]);
    assert_eq!(code(&["eval", "--detections", p(&dets), "--gt", p(&narrow), "--frame-level"]), Some(2));
    let unlabeled = dir.path().join("unlabeled");
    let (mut t, _) = read_pack(&test).unwrap();
    t.labels = None;
    write_pack(&unlabeled, &t).unwrap();
    assert_eq!(code(&["eval", "--detections", p(&dets), "--gt", p(&unlabeled), "--frame-level"]), Some(2));

    // Tampered model.
    let blob = model.join("grid_bank.bin");
    let mut bytes = fs::read(&blob).unwrap();
    bytes[20] ^= 0xff;
    fs::write(&blob, bytes).unwrap();
    assert_eq!(code(&["detect", "--pack", p(&test), "--model", p(&model)]), Some(2));

    // Missing files are runtime failures.
    assert_eq!(code(&["detect", "--pack", p(&dir.path().join("nope")), "--model", p(&model)]), Some(3));
}

#[test]
fn diagnostics_stay_off_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = write_synth(dir.path(), &small_config(11));
    let out = run(&["-vv", "train", "--pack", p(&train), "--out", p(&dir.path().join("m"))]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert!(v["model_hash"].is_string());
    assert!(!out.stderr.is_empty());
    let _: ModelManifest = serde_json::from_str(&fs::read_to_string(dir.path().join("m/manifest.json")).unwrap()).unwrap();
}
