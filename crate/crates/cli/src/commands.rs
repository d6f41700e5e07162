//! Subcommands of the `pointscatter` binary.
//!
//! Datasets are directories of `image_{k}.pgm`, `mask_{k}.pgm` and
//! `centerline_{k}.pgm`; files are paired across kinds by their index `k`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pointscatter::convert::{mask_to_points, rasterize, threshold_map};
use pointscatter::losses::{LossBreakdown, LossParams};
use pointscatter::metrics::{
    tolerant_centerline_scores, topology_error, volumetric_scores, TolerantScores, TopologyErrors,
    VolumetricScores,
};
use pointscatter::model::{predict, train, ModelParams, TrainConfig, TrainSample};
use pointscatter::synth::{generate_dataset, SynthParams};
use pointscatter::{BinaryMask, Error, RegionGrid, ScoredPoint};
use serde::Serialize;

use crate::bench::{self, BenchConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::pgm::Pgm;
use crate::points;

/// Environment variable holding the matching thread count.
pub const THREADS_ENV: &str = "POINTSCATTER_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "pointscatter",
    version,
    about = "Region-wise point-set segmentation of tubular structures"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset of tube images, masks and centerlines.
    Synth(SynthArgs),
    /// Train the patch-wise point predictor on a synthetic dataset.
    Train(TrainArgs),
    /// Predict scored points and a score map for images.
    Predict(PredictArgs),
    /// Score predicted maps against ground-truth masks.
    Eval(EvalArgs),
    /// Time batched greedy matching against per-region Hungarian.
    BenchMatch(BenchArgs),
    /// Convert between masks and point sets.
    Convert(ConvertArgs),
}

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Synth(a) => run_synth(&a),
        Command::Train(a) => run_train(&a),
        Command::Predict(a) => run_predict(&a),
        Command::Eval(a) => {
            let report = run_eval(&a)?;
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            match &a.out {
                Some(path) => write_file(path, format!("{text}\n").as_bytes()),
                None => {
                    println!("{text}");
                    Ok(())
                }
            }
        }
        Command::BenchMatch(a) => {
            let rows = run_bench(&a)?;
            print!("{}", bench::to_csv(&rows));
            Ok(())
        }
        Command::Convert(a) => run_convert(&a),
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn read_model(path: &Path) -> CliResult<ModelParams> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(ModelParams::from_bytes(&bytes)?)
}

/// `k` from a file stem `{prefix}_{k}`.
fn stem_index(stem: &str, prefix: &str) -> Option<usize> {
    stem.strip_prefix(prefix)?.strip_prefix('_')?.parse().ok()
}

/// Every `{prefix}_{k}.pgm` in `dir`, keyed by `k`.
pub fn indexed_files(dir: &Path, prefix: &str) -> CliResult<BTreeMap<usize, PathBuf>> {
    let mut out = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("pgm") {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if let Some(k) = stem_index(stem, prefix) {
            out.insert(k, path);
        }
    }
    Ok(out)
}

/// Pairs two indexed file sets; an index present in only one is an error.
fn pair_indexed(
    left: BTreeMap<usize, PathBuf>,
    right: BTreeMap<usize, PathBuf>,
) -> CliResult<Vec<(usize, PathBuf, PathBuf)>> {
    if let Some((_, p)) = left.iter().find(|(k, _)| !right.contains_key(k)) {
        return Err(Error::Pairing(format!("{} has no counterpart", p.display())).into());
    }
    if let Some((_, p)) = right.iter().find(|(k, _)| !left.contains_key(k)) {
        return Err(Error::Pairing(format!("{} has no counterpart", p.display())).into());
    }
    Ok(left
        .into_iter()
        .map(|(k, l)| {
            let r = right[&k].clone();
            (k, l, r)
        })
        .collect())
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of samples; sample k uses seed + k.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Side length of the square images.
    #[arg(long, default_value_t = 48)]
    pub size: usize,
    #[arg(long, default_value_t = 3)]
    pub branches: usize,
    /// Amplitude of the additive uniform noise, in [0, 1).
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Region size the data is meant for; --size must be divisible by it.
    #[arg(long, default_value_t = 4)]
    pub downsample: usize,
    #[arg(long, default_value_t = 2)]
    pub min_width: usize,
    #[arg(long, default_value_t = 4)]
    pub max_width: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

impl SynthArgs {
    pub fn params(&self) -> SynthParams {
        SynthParams {
            height: self.size,
            width: self.size,
            downsample: self.downsample,
            n_branches: self.branches,
            width_range: (self.min_width, self.max_width),
            noise: self.noise,
        }
    }
}

pub fn run_synth(args: &SynthArgs) -> CliResult<()> {
    let start = Instant::now();
    let params = args.params();
    let samples = generate_dataset(args.seed, args.count, &params)?;
    create_dir(&args.out_dir)?;
    let mut manifest = RunManifest::new(
        "synth",
        args.seed,
        &serde_json::json!({ "count": args.count, "params": params }),
    );
    for (k, s) in samples.iter().enumerate() {
        for (kind, pgm) in [
            ("image", Pgm::from_score_map(&s.image)),
            ("mask", Pgm::from_mask(&s.mask)),
            ("centerline", Pgm::from_mask(&s.centerline)),
        ] {
            let name = format!("{kind}_{k}.pgm");
            pgm.write(&args.out_dir.join(&name))?;
            manifest.artifact(name);
        }
    }
    manifest.timing("total", start.elapsed().as_secs_f64());
    manifest.write(&args.out_dir)
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Predict points on every tube pixel.
    Mask,
    /// Predict points on the one-pixel centerline.
    Centerline,
}

impl Task {
    pub fn prefix(self) -> &'static str {
        match self {
            Task::Mask => "mask",
            Task::Centerline => "centerline",
        }
    }

    /// Focal-loss positive weight used unless overridden: centerline
    /// targets are sparser, so positives get more weight.
    pub fn default_alpha(self) -> f64 {
        match self {
            Task::Mask => 0.6,
            Task::Centerline => 0.7,
        }
    }
}

pub const HISTORY_FILE: &str = "history.csv";
pub const MODEL_FILE: &str = "model.bin";

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Dataset directory written by `synth`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Task::Mask)]
    pub task: Task,
    /// Skip the first samples (by index).
    #[arg(long, default_value_t = 0)]
    pub skip: usize,
    /// Use at most this many samples after --skip.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Keep the learning rate constant instead of cosine decay.
    #[arg(long)]
    pub constant_lr: bool,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub downsample: Option<usize>,
    /// Points predicted per region.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Inference threshold recorded with the run.
    #[arg(long)]
    pub threshold: Option<f64>,
}

impl TrainArgs {
    pub fn config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        let l = LossParams::default();
        TrainConfig {
            downsample: self.downsample.unwrap_or(d.downsample),
            points_per_region: self.n.unwrap_or(d.points_per_region),
            hidden: self.hidden.unwrap_or(d.hidden),
            loss: LossParams {
                eta: self.eta.unwrap_or(l.eta),
                lambda: self.lambda.unwrap_or(l.lambda),
                alpha: self.alpha.unwrap_or(self.task.default_alpha()),
                gamma: self.gamma.unwrap_or(l.gamma),
            },
            inference_threshold: self.threshold.unwrap_or(d.inference_threshold),
            learning_rate: self.lr.unwrap_or(d.learning_rate),
            cosine_schedule: !self.constant_lr,
            momentum: self.momentum.unwrap_or(d.momentum),
            iterations: self.iterations.unwrap_or(d.iterations),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            seed: self.seed.unwrap_or(d.seed),
        }
    }
}

/// A loaded training sample and the files it came from.
#[derive(Debug, Clone)]
pub struct LoadedSample {
    pub index: usize,
    pub image_path: PathBuf,
    pub target_path: PathBuf,
    pub sample: TrainSample,
}

/// Reads `image_{k}.pgm` with its task target for every `k` in `dir`, in
/// index order.
pub fn load_dataset(dir: &Path, task: Task) -> CliResult<Vec<LoadedSample>> {
    let pairs = pair_indexed(
        indexed_files(dir, "image")?,
        indexed_files(dir, task.prefix())?,
    )?;
    pairs
        .into_iter()
        .map(|(index, image_path, target_path)| {
            let image = Pgm::read(&image_path)?.to_score_map();
            let target = Pgm::read(&target_path)?.to_mask();
            Ok(LoadedSample {
                index,
                image_path,
                target_path,
                sample: TrainSample { image, target },
            })
        })
        .collect()
}

pub fn history_csv(history: &[LossBreakdown]) -> String {
    let mut out = String::from("step,objectness,regression,total\n");
    for (step, h) in history.iter().enumerate() {
        writeln!(out, "{step},{},{},{}", h.objectness, h.regression, h.total)
            .expect("string write");
    }
    out
}

pub fn run_train(args: &TrainArgs) -> CliResult<()> {
    let start = Instant::now();
    let config = args.config();
    let loaded: Vec<LoadedSample> = load_dataset(&args.data, args.task)?
        .into_iter()
        .skip(args.skip)
        .take(args.limit.unwrap_or(usize::MAX))
        .collect();
    let samples: Vec<TrainSample> = loaded.iter().map(|l| l.sample.clone()).collect();
    let load_secs = start.elapsed().as_secs_f64();

    let (params, history) = train(&samples, &config).map_err(|e| match e {
        // the trainer counts samples by position; report the file instead
        Error::Capacity(msg) => Error::Capacity(name_sample(&msg, &loaded)),
        Error::Dimension(msg) => Error::Dimension(name_sample(&msg, &loaded)),
        other => other,
    })?;
    let train_secs = start.elapsed().as_secs_f64() - load_secs;

    create_dir(&args.out_dir)?;
    write_file(&args.out_dir.join(MODEL_FILE), &params.to_bytes())?;
    write_file(
        &args.out_dir.join(HISTORY_FILE),
        history_csv(&history).as_bytes(),
    )?;

    let mut manifest = RunManifest::new(
        "train",
        config.seed,
        &serde_json::json!({
            "task": args.task,
            "data": args.data,
            "samples": loaded.iter().map(|l| l.index).collect::<Vec<_>>(),
            "train": config,
        }),
    );
    manifest.artifact(MODEL_FILE);
    manifest.artifact(HISTORY_FILE);
    manifest.timing("load", load_secs);
    manifest.timing("train", train_secs);
    manifest.write(&args.out_dir)
}

/// Rewrites a leading `sample {i}` into the target file it was read from.
fn name_sample(msg: &str, loaded: &[LoadedSample]) -> String {
    let named = msg.strip_prefix("sample ").and_then(|rest| {
        let (i, tail) = rest.split_once(' ')?;
        let l = loaded.get(i.parse::<usize>().ok()?)?;
        Some(format!("{} {tail}", l.target_path.display()))
    });
    named.unwrap_or_else(|| msg.to_string())
}

// ---------------------------------------------------------------- predict

pub const POINTS_FILE: &str = "points.jsonl";
pub const SCOREMAP_FILE: &str = "scoremap.pgm";

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Input images. With several, outputs are named by each image's
    /// trailing `_k` index: points_k.jsonl and scoremap_k.pgm.
    #[arg(long, required = true, num_args = 1..)]
    pub image: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Points scoring below this are dropped.
    #[arg(long, default_value_t = 0.1)]
    pub threshold: f64,
}

/// Points at or above `threshold` and their rasterized score map.
pub fn predict_image(
    params: &ModelParams,
    image: &Pgm,
    threshold: f64,
) -> CliResult<(Vec<ScoredPoint>, Pgm)> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(CliError::Usage(format!(
            "threshold {threshold} outside [0, 1]"
        )));
    }
    let map = image.to_score_map();
    let grid = RegionGrid::new(map.height(), map.width(), params.shape().downsample)?;
    let points = predict(params, &map, &grid, threshold)?;
    let raster = rasterize(&points, map.height(), map.width());
    Ok((points, Pgm::from_score_map(&raster)))
}

pub fn run_predict(args: &PredictArgs) -> CliResult<()> {
    let start = Instant::now();
    let params = read_model(&args.model)?;
    let single = args.image.len() == 1;
    let mut names = Vec::with_capacity(args.image.len());
    for path in &args.image {
        if single {
            names.push((POINTS_FILE.to_string(), SCOREMAP_FILE.to_string()));
            continue;
        }
        let k = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.rsplit_once('_'))
            .and_then(|(_, k)| k.parse::<usize>().ok())
            .ok_or_else(|| {
                CliError::Usage(format!("{} has no trailing _k index", path.display()))
            })?;
        let pair = (format!("points_{k}.jsonl"), format!("scoremap_{k}.pgm"));
        if names.contains(&pair) {
            return Err(CliError::Usage(format!("duplicate image index {k}")));
        }
        names.push(pair);
    }

    create_dir(&args.out_dir)?;
    let mut manifest = RunManifest::new("predict", 0, args);
    for (path, (points_name, map_name)) in args.image.iter().zip(names) {
        let (points, map) = predict_image(&params, &Pgm::read(path)?, args.threshold)?;
        points::write(&args.out_dir.join(&points_name), &points)?;
        map.write(&args.out_dir.join(&map_name))?;
        manifest.artifact(points_name);
        manifest.artifact(map_name);
    }
    manifest.timing("total", start.elapsed().as_secs_f64());
    manifest.write(&args.out_dir)
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    /// Predicted score map, or a directory of `{pred-prefix}_{k}.pgm`.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth mask, or a directory of `{gt-prefix}_{k}.pgm`.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value = "scoremap")]
    pub pred_prefix: String,
    /// Defaults to `mask`, or `centerline` with --centerline.
    #[arg(long)]
    pub gt_prefix: Option<String>,
    /// Score-map threshold for the binary metrics.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Ground truth is a centerline; adds tolerance-based scores.
    #[arg(long)]
    pub centerline: bool,
    /// Euclidean tolerance radius in pixels for --centerline.
    #[arg(long, default_value_t = 3.0)]
    pub tolerance: f64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageReport {
    pub pred: String,
    pub gt: String,
    pub volumetric: VolumetricScores,
    pub topology: TopologyErrors,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerant: Option<TolerantScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanReport {
    pub volumetric: VolumetricScores,
    pub topology: TopologyErrors,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerant: Option<TolerantScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub mode: &'static str,
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub images: Vec<ImageReport>,
    pub mean: MeanReport,
}

fn mean_report(images: &[ImageReport]) -> MeanReport {
    let n = images.len().max(1) as f64;
    let avg = |f: &dyn Fn(&ImageReport) -> f64| images.iter().map(f).sum::<f64>() / n;
    let aucs: Vec<f64> = images.iter().filter_map(|r| r.volumetric.auc).collect();
    let tolerant = images.first().and_then(|r| r.tolerant).map(|_| {
        let t = |f: &dyn Fn(&TolerantScores) -> f64| avg(&|r| r.tolerant.as_ref().map_or(0.0, f));
        TolerantScores {
            precision: t(&|s| s.precision),
            recall: t(&|s| s.recall),
            dice: t(&|s| s.dice),
        }
    });
    MeanReport {
        volumetric: VolumetricScores {
            auc: (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64),
            dice: avg(&|r| r.volumetric.dice),
            cl_dice: avg(&|r| r.volumetric.cl_dice),
            accuracy: avg(&|r| r.volumetric.accuracy),
            precision: avg(&|r| r.volumetric.precision),
            recall: avg(&|r| r.volumetric.recall),
        },
        topology: TopologyErrors {
            betti0_error: avg(&|r| r.topology.betti0_error),
            betti1_error: avg(&|r| r.topology.betti1_error),
            euler_error: avg(&|r| r.topology.euler_error),
        },
        tolerant,
    }
}

/// Scores one predicted map against its ground truth.
pub fn evaluate_pair(
    pred: &Pgm,
    gt: &BinaryMask,
    threshold: f64,
    tolerance: Option<f64>,
) -> CliResult<(VolumetricScores, TopologyErrors, Option<TolerantScores>)> {
    let map = pred.to_score_map();
    let volumetric = volumetric_scores(&map, gt, threshold)?;
    let binary = threshold_map(&map, threshold);
    let topology = topology_error(&binary, gt)?;
    let tolerant = tolerance
        .map(|r| tolerant_centerline_scores(&binary, gt, r))
        .transpose()?;
    Ok((volumetric, topology, tolerant))
}

pub fn run_eval(args: &EvalArgs) -> CliResult<EvalReport> {
    if !(0.0..=1.0).contains(&args.threshold) {
        return Err(CliError::Usage(format!(
            "threshold {} outside [0, 1]",
            args.threshold
        )));
    }
    let gt_prefix = args.gt_prefix.clone().unwrap_or_else(|| {
        if args.centerline {
            "centerline"
        } else {
            "mask"
        }
        .to_string()
    });
    let pairs: Vec<(PathBuf, PathBuf)> = match (args.pred.is_dir(), args.gt.is_dir()) {
        (true, true) => pair_indexed(
            indexed_files(&args.pred, &args.pred_prefix)?,
            indexed_files(&args.gt, &gt_prefix)?,
        )?
        .into_iter()
        .map(|(_, p, g)| (p, g))
        .collect(),
        (false, false) => vec![(args.pred.clone(), args.gt.clone())],
        _ => {
            return Err(Error::Pairing(
                "--pred and --gt must both be files or both be directories".into(),
            )
            .into())
        }
    };
    if pairs.is_empty() {
        return Err(Error::Pairing("no prediction/ground-truth pairs found".into()).into());
    }
    let tolerance = args.centerline.then_some(args.tolerance);
    let mut images = Vec::with_capacity(pairs.len());
    for (p, g) in pairs {
        let gt = Pgm::read(&g)?.to_mask();
        let (volumetric, topology, tolerant) =
            evaluate_pair(&Pgm::read(&p)?, &gt, args.threshold, tolerance)?;
        images.push(ImageReport {
            pred: p.display().to_string(),
            gt: g.display().to_string(),
            volumetric,
            topology,
            tolerant,
        });
    }
    Ok(EvalReport {
        mode: if args.centerline {
            "centerline"
        } else {
            "mask"
        },
        threshold: args.threshold,
        tolerance,
        mean: mean_report(&images),
        images,
    })
}

// ---------------------------------------------------------------- bench

pub const BENCH_FILE: &str = "bench.csv";

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "384,768,1024")]
    pub image_sizes: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    pub downsample: usize,
    /// Predictions per region.
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    /// Images per size.
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
    /// Timed runs per method; the fastest counts.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0.8)]
    pub eta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Threads for batched greedy; defaults to $POINTSCATTER_THREADS or 1.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Where to write bench.csv and manifest.json; CSV also goes to stdout.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Thread count from the environment variable, if set.
pub fn env_threads() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(t) if t >= 1 => Ok(Some(t)),
            _ => Err(CliError::Usage(format!(
                "{THREADS_ENV}={v:?} is not a positive integer"
            ))),
        },
    }
}

impl BenchArgs {
    pub fn config(&self) -> CliResult<BenchConfig> {
        let threads = match self.threads {
            Some(t) => t,
            None => env_threads()?.unwrap_or(1),
        };
        if self.image_sizes.is_empty() || self.n == 0 || self.batch == 0 || threads == 0 {
            return Err(CliError::Usage(
                "sizes, --n, --batch and threads must be positive".into(),
            ));
        }
        Ok(BenchConfig {
            image_sizes: self.image_sizes.clone(),
            downsample: self.downsample,
            n: self.n,
            batch: self.batch,
            repeats: self.repeats,
            eta: self.eta,
            seed: self.seed,
            threads,
        })
    }
}

pub fn run_bench(args: &BenchArgs) -> CliResult<Vec<bench::BenchRow>> {
    let start = Instant::now();
    let cfg = args.config()?;
    let rows = bench::run(&cfg)?;
    if let Some(dir) = &args.out_dir {
        create_dir(dir)?;
        write_file(&dir.join(BENCH_FILE), bench::to_csv(&rows).as_bytes())?;
        let mut manifest = RunManifest::new(
            "bench-match",
            cfg.seed,
            &serde_json::json!({ "bench": cfg, "distribution": bench::distribution(&cfg) }),
        );
        manifest.artifact(BENCH_FILE);
        manifest.timing("total", start.elapsed().as_secs_f64());
        manifest.write(dir)?;
    }
    Ok(rows)
}

// ---------------------------------------------------------------- convert

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum ConvertMode {
    /// Foreground pixels of a PGM mask to a JSON-lines point set (score 1).
    Mask2points,
    /// Rasterize a point set and threshold at 0.5 into a PGM mask.
    Points2mask,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConvertArgs {
    #[arg(long, value_enum)]
    pub mode: ConvertMode,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Output size for points2mask.
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    /// Take the points2mask output size from this PGM.
    #[arg(long)]
    pub like: Option<PathBuf>,
}

pub fn run_convert(args: &ConvertArgs) -> CliResult<()> {
    match args.mode {
        ConvertMode::Mask2points => {
            let mask = Pgm::read(&args.input)?.to_mask();
            let pts: Vec<ScoredPoint> = mask_to_points(&mask)
                .into_iter()
                .map(|p| ScoredPoint {
                    point: p,
                    score: 1.0,
                })
                .collect();
            points::write(&args.output, &pts)
        }
        ConvertMode::Points2mask => {
            let (height, width) = match (&args.like, args.height, args.width) {
                (Some(like), None, None) => {
                    let pgm = Pgm::read(like)?;
                    (pgm.height, pgm.width)
                }
                (None, Some(h), Some(w)) => (h, w),
                _ => {
                    return Err(CliError::Usage(
                        "points2mask needs either --like or both --height and --width".into(),
                    ))
                }
            };
            let pts = points::read(&args.input)?;
            let mask = threshold_map(&rasterize(&pts, height, width), 0.5);
            Pgm::from_mask(&mask).write(&args.output)
        }
    }
}
