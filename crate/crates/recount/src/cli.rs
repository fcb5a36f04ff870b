//! Command-line surface.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use recount_core::eval::{split_unseen, AgreementMode, FrameAggregation, SplitSpec};
use recount_core::grid::DEFAULT_MIN_SAMPLES;
use recount_core::novelty::{DetectorConfig, KernelParam, NnMode, SolverParams, DEFAULT_GAMMA, DEFAULT_NU, DEFAULT_PCA_DIM};
use recount_core::recounting::{RecountMode, RecountRecord};
use recount_core::reduction::pq::PqConfig;
use recount_core::synth::{generate, generate_split_fixture, SynthConfig};

use crate::error::{Error, Result};
use crate::model::{load_model, save_model};
use crate::pack_io::{read_json, read_json_lines, read_pack, write_json, write_json_lines, write_pack};
use crate::pipeline::{detect, evaluate, recount, train, EvalOptions, TrainOptions};
use crate::report::{render_table, roc_csv, Detection};

pub const MODEL_DIR_ENV: &str = "RECOUNT_MODEL_DIR";

#[derive(Debug, Parser)]
#[command(name = "recount", version, about = "Abnormal event detection and recounting over semantic region features")]
pub struct Cli {
    /// JSON object supplying any flag of the subcommand (command-line flags win).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic train/test packs with planted anomalies.
    Synth(SynthArgs),
    /// Fit the grid of detectors and the recounting model on a pack.
    Train(TrainArgs),
    /// Score every region of a pack.
    Detect(DetectArgs),
    /// Predict concepts of regions and score how unusual each is.
    Recount(RecountArgs),
    /// Evaluate detections (and recounts) against ground truth.
    Eval(EvalArgs),
    /// Build unseen-category train/test splits of an annotated pack.
    Split(SplitArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DetectorKind {
    Nn,
    Ocsvm,
    Kde,
}

/// `RxC` grid shape, e.g. `3x4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridShape {
    pub rows: usize,
    pub cols: usize,
}

impl FromStr for GridShape {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (r, c) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected RxC, got {s:?}"))?;
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
        let (rows, cols) = (parse(r)?, parse(c)?);
        if rows == 0 || cols == 0 {
            return Err("grid needs at least one row and one column".into());
        }
        Ok(GridShape { rows, cols })
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// SynthConfig JSON; missing fields take their defaults.
    #[arg(long, value_name = "FILE")]
    pub synth_config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the annotated split fixture instead of train/test packs.
    #[arg(long)]
    pub split_fixture: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub pack: PathBuf,
    #[arg(long, value_enum, default_value = "nn")]
    pub detector: DetectorKind,
    #[arg(long, default_value = "3x4")]
    pub grid: GridShape,
    /// Bits per PQ sub-code.
    #[arg(long, default_value_t = 8)]
    pub pq_bits: u32,
    #[arg(long, default_value_t = 16)]
    pub pq_subspaces: usize,
    #[arg(long, default_value_t = 25)]
    pub pq_iterations: usize,
    /// Exact nearest-neighbour search instead of PQ codes.
    #[arg(long)]
    pub exact: bool,
    /// L2-normalize features before PQ.
    #[arg(long)]
    pub normalize: bool,
    /// PCA dimension for ocsvm and kde; 0 disables PCA.
    #[arg(long, default_value_t = DEFAULT_PCA_DIM)]
    pub pca_dim: usize,
    /// RBF kernel exp(-gamma |a-b|^2).
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    /// RBF width exp(-|a-b|^2 / (2 sigma^2)); overrides --gamma.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_NU)]
    pub nu: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_SAMPLES)]
    pub min_samples: usize,
    /// Map cell scores to ranks among their training scores.
    #[arg(long)]
    pub rank_normalize: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = MODEL_DIR_ENV)]
    pub out: PathBuf,
}

impl TrainArgs {
    pub fn detector_config(&self) -> DetectorConfig {
        let pca_dim = (self.pca_dim > 0).then_some(self.pca_dim);
        match self.detector {
            DetectorKind::Nn if self.exact => DetectorConfig::nn_exact(),
            DetectorKind::Nn => DetectorConfig::Nn {
                mode: NnMode::Compressed {
                    pq: PqConfig {
                        subspaces: self.pq_subspaces,
                        bits: self.pq_bits,
                        iterations: self.pq_iterations,
                        seed: 0,
                    },
                    normalize: self.normalize,
                },
            },
            DetectorKind::Ocsvm => DetectorConfig::Ocsvm {
                kernel: match self.sigma {
                    Some(s) => KernelParam::Width(s),
                    None => KernelParam::Gamma(self.gamma),
                },
                nu: self.nu,
                pca_dim,
                solver: SolverParams::default(),
            },
            DetectorKind::Kde => DetectorConfig::Kde { pca_dim },
        }
    }

    pub fn options(&self) -> TrainOptions {
        let mut opts = TrainOptions::new(self.detector_config(), self.seed);
        opts.rows = self.grid.rows;
        opts.cols = self.grid.cols;
        opts.bank.min_samples = self.min_samples;
        opts.bank.rank_normalize = self.rank_normalize;
        opts
    }
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub pack: PathBuf,
    #[arg(long, env = MODEL_DIR_ENV)]
    pub model: PathBuf,
    /// Flag regions scoring at least this value (accepts inf and -inf).
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
    /// JSON lines output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RecountArgs {
    #[arg(long)]
    pub pack: PathBuf,
    #[arg(long, env = MODEL_DIR_ENV)]
    pub model: PathBuf,
    /// Only recount regions scoring at least this value.
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
    /// List every category with classification score >= 0.1, not only the argmax.
    #[arg(long)]
    pub multi: bool,
    /// With --multi, drop categories whose concept anomaly is below this.
    #[arg(long, default_value_t = 0.0)]
    pub min_anomaly: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Aggregation {
    Max,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Agreement {
    Intersect,
    Exact,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Output of `detect`.
    #[arg(long)]
    pub detections: PathBuf,
    /// Pack holding labels.jsonl.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub frame_level: bool,
    #[arg(long)]
    pub pixel_level: bool,
    /// Average precision of regions showing unseen categories.
    #[arg(long)]
    pub unseen_ap: bool,
    /// Output of `recount --multi`, for the recounting ROC.
    #[arg(long)]
    pub recount: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "max")]
    pub aggregation: Aggregation,
    #[arg(long, value_enum, default_value = "intersect")]
    pub agreement: Agreement,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write every ROC point as CSV.
    #[arg(long)]
    pub roc_csv: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub pack: PathBuf,
    #[arg(long)]
    pub task: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = recount_core::eval::split::DEFAULT_REPEATS)]
    pub repeats: usize,
    /// Receives repeat_<k>/{train,test,split.json}.
    #[arg(long)]
    pub out: PathBuf,
}

fn flag_present(args: &[OsString], flag: &str) -> bool {
    let eq = format!("{flag}=");
    args.iter()
        .filter_map(|a| a.to_str())
        .any(|a| a == flag || a.starts_with(&eq))
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

/// Appends flags from the `--config` JSON object that are not already on the
/// command line. Keys are flag names without dashes (`pq_bits` or
/// `pq-bits`); `true` adds a bare switch, `false` and `null` add nothing,
/// arrays repeat the flag.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let value: serde_json::Value = read_json(&path)?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Usage(format!("{}: config must be a JSON object", path.display())))?;
    let mut out = args.clone();
    for (key, v) in obj {
        let flag = format!("--{}", key.replace('_', "-"));
        if flag == "--config" || flag_present(&args, &flag) {
            continue;
        }
        let values = match v {
            serde_json::Value::Array(items) => items.clone(),
            other => vec![other.clone()],
        };
        for item in values {
            match item {
                serde_json::Value::Bool(true) => out.push(flag.clone().into()),
                serde_json::Value::Bool(false) | serde_json::Value::Null => {}
                serde_json::Value::String(s) => {
                    out.push(flag.clone().into());
                    out.push(s.into());
                }
                serde_json::Value::Number(n) => {
                    out.push(flag.clone().into());
                    out.push(n.to_string().into());
                }
                _ => {
                    return Err(Error::Usage(format!(
                        "{}: unsupported value for {key:?}",
                        path.display()
                    )))
                }
            }
        }
    }
    Ok(out)
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn emit_text(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>")(e)),
        _ => Ok(()),
    }
}

fn emit_json<T: Serialize>(value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::json("<stdout>", None))?;
    text.push('\n');
    emit_text(&text)
}

fn emit_lines<T: Serialize>(out: Option<&Path>, items: &[T]) -> Result<()> {
    match out {
        Some(path) => write_json_lines(path, items),
        None => {
            let mut text = String::new();
            for item in items {
                text.push_str(&serde_json::to_string(item).map_err(Error::json("<stdout>", None))?);
                text.push('\n');
            }
            emit_text(&text)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Detect(a) => cmd_detect(&a),
        Command::Recount(a) => cmd_recount(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Split(a) => cmd_split(&a),
    }
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    if a.split_fixture {
        let pack = generate_split_fixture(a.seed.unwrap_or(0));
        write_pack(&a.out, &pack)?;
        return emit_json(&serde_json::json!({ "pack": a.out, "records": pack.len() }));
    }
    let mut cfg: SynthConfig = match &a.synth_config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let out = generate(&cfg)?;
    write_pack(&a.out.join("train"), &out.train)?;
    write_pack(&a.out.join("test"), &out.test)?;
    emit_json(&serde_json::json!({
        "train": a.out.join("train"),
        "test": a.out.join("test"),
        "train_records": out.train.len(),
        "test_records": out.test.len(),
    }))
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let (pack, _) = read_pack(&a.pack)?;
    let model = train(&pack, &a.options())?;
    let manifest = save_model(&a.out, &model)?;
    emit_json(&serde_json::json!({
        "model": a.out,
        "model_hash": manifest.model_hash,
        "detector": model.bank.config.detector.name(),
        "grid": format!("{}x{}", manifest.grid.rows, manifest.grid.cols),
        "fitted_cells": model.bank.fitted_cells(),
    }))
}

pub fn cmd_detect(a: &DetectArgs) -> Result<()> {
    let (pack, _) = read_pack(&a.pack)?;
    let (model, _) = load_model(&a.model)?;
    let detections = detect(&model, &pack, a.threshold)?;
    if a.threshold.is_some() {
        let hits = detections.iter().filter(|d| d.detected == Some(true)).count();
        log::info!("{hits} of {} regions at or above the threshold", detections.len());
    }
    emit_lines(a.out.as_deref(), &detections)
}

pub fn cmd_recount(a: &RecountArgs) -> Result<()> {
    let (pack, _) = read_pack(&a.pack)?;
    let (model, _) = load_model(&a.model)?;
    let mode = if a.multi {
        RecountMode::Multi {
            min_anomaly: a.min_anomaly,
        }
    } else {
        RecountMode::Single
    };
    let records = recount(&model, &pack, a.threshold, mode)?;
    emit_lines(a.out.as_deref(), &records)
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    if !(a.frame_level || a.pixel_level || a.unseen_ap || a.recount.is_some()) {
        return Err(Error::Usage(
            "nothing to evaluate: pass --frame-level, --pixel-level, --unseen-ap or --recount".into(),
        ));
    }
    let (gt, _) = read_pack(&a.gt)?;
    let detections: Vec<Detection> = read_json_lines(&a.detections)?;
    let recounts: Option<Vec<RecountRecord>> = a.recount.as_deref().map(read_json_lines).transpose()?;
    let opts = EvalOptions {
        frame_level: a.frame_level,
        pixel_level: a.pixel_level,
        unseen_ap: a.unseen_ap,
        aggregation: match a.aggregation {
            Aggregation::Max => FrameAggregation::Max,
            Aggregation::Mean => FrameAggregation::Mean,
        },
        agreement: match a.agreement {
            Agreement::Intersect => AgreementMode::Intersect,
            Agreement::Exact => AgreementMode::Exact,
        },
    };
    let eval = evaluate(&gt, &detections, recounts.as_deref(), &opts)?;
    if let Some(path) = &a.out {
        write_json(path, &eval.report)?;
    }
    if let Some(path) = &a.roc_csv {
        let named: Vec<(String, &_)> = eval.curves.iter().map(|(n, c)| (n.clone(), c)).collect();
        fs::write(path, roc_csv(&named)).map_err(Error::io(path))?;
    }
    match a.format {
        OutputFormat::Json => emit_json(&eval.report),
        OutputFormat::Text => emit_text(&render_table(&eval.report)),
    }
}

pub fn cmd_split(a: &SplitArgs) -> Result<()> {
    let (pack, _) = read_pack(&a.pack)?;
    let mut summary = Vec::new();
    for repeat in 1..=a.repeats {
        let spec = SplitSpec {
            task: a.task.clone(),
            seed: a.seed,
            repeat,
        };
        let split = split_unseen(&pack, &spec)?;
        let (train_pack, test_pack) = split.apply(&pack);
        let dir = a.out.join(format!("repeat_{repeat}"));
        write_pack(&dir.join("train"), &train_pack)?;
        write_pack(&dir.join("test"), &test_pack)?;
        write_json(&dir.join("split.json"), &split)?;
        summary.push(serde_json::json!({
            "repeat": repeat,
            "unseen": split.unseen,
            "train_images": split.train_images,
            "test_images": split.test_images,
        }));
    }
    emit_json(&summary)
}
