use std::path::PathBuf;
use std::str::FromStr;

use changecnn::baselines::BaselineMethod;
use changecnn::models::{ArchKind, ClassWeightSource, TrainConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "changecnn", version, about = "Patch-based CNN change detection for multispectral image pairs")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Line-oriented `key = value` file; flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Worker thread cap (default: available cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: Option<u32>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Copy exported per-band images into the canonical dataset layout.
    Convert(ConvertArgs),
    /// Print class counts and per-band value ranges of a dataset.
    Stats(StatsArgs),
    /// Generate a labelled synthetic dataset.
    Synth(SynthArgs),
    /// Train a change classifier on the regions of a split file.
    Train(TrainArgs),
    /// Produce probability and change maps for one region.
    Infer(InferArgs),
    /// Run a classical difference-image detector on one region.
    Baseline(BaselineArgs),
    /// Score a predicted change map against ground truth.
    Eval(EvalArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Convert(_) => "convert",
            Command::Stats(_) => "stats",
            Command::Synth(_) => "synth",
            Command::Train(_) => "train",
            Command::Infer(_) => "infer",
            Command::Baseline(_) => "baseline",
            Command::Eval(_) => "eval",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ConvertArgs {
    #[arg(value_parser = existing_dir)]
    pub input: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    #[arg(value_parser = existing_dir)]
    pub dataset: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Number of regions.
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    /// Regions listed in test.txt (default: a quarter of --n).
    #[arg(long)]
    pub n_test: Option<u64>,
    /// Side length of every region in pixels.
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    /// Bands written per date.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..=13))]
    pub channels: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Ef,
    Siam,
}

impl From<Arch> for ArchKind {
    fn from(a: Arch) -> Self {
        match a {
            Arch::Ef => ArchKind::EarlyFusion,
            Arch::Siam => ArchKind::Siamese,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Weights {
    Inverse,
    Unit,
}

impl From<Weights> for ClassWeightSource {
    fn from(w: Weights) -> Self {
        match w {
            Weights::Inverse => ClassWeightSource::Inverse,
            Weights::Unit => ClassWeightSource::Unit,
        }
    }
}

fn train_default() -> TrainConfig {
    TrainConfig::default()
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(value_parser = existing_dir)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value = "ef")]
    pub arch: Arch,
    /// Input bands per date: 3, 4, 10 or 13.
    #[arg(long, default_value_t = 3, value_parser = channel_count)]
    pub channels: usize,
    #[arg(long, default_value_t = train_default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = train_default().learning_rate)]
    pub lr: f64,
    #[arg(long, default_value_t = train_default().batch_size)]
    pub batch: usize,
    /// Spacing of the training center grid.
    #[arg(long, default_value_t = train_default().center_stride)]
    pub center_stride: usize,
    #[arg(long, value_enum, default_value = "inverse")]
    pub class_weights: Weights,
    /// Region list, relative to the dataset directory.
    #[arg(long, default_value = "train.txt")]
    pub split: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct InferArgs {
    #[arg(value_parser = existing_file)]
    pub model: PathBuf,
    #[arg(value_parser = existing_dir)]
    pub region: PathBuf,
    /// Spacing of the classified patch centers.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..=15))]
    pub stride: u64,
    /// Standard deviation of the voting kernel; 0 keeps only the center.
    #[arg(long, default_value_t = 3.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Diff,
    Logratio,
    Glrt,
}

impl From<Method> for BaselineMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Diff => BaselineMethod::Diff,
            Method::Logratio => BaselineMethod::LogRatio,
            Method::Glrt => BaselineMethod::Glrt,
        }
    }
}

/// How the baseline statistic is cut into a change map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdChoice {
    Otsu,
    Supervised,
    Value(f64),
}

impl FromStr for ThresholdChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "otsu" => Ok(ThresholdChoice::Otsu),
            "supervised" => Ok(ThresholdChoice::Supervised),
            other => match other.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(ThresholdChoice::Value(v)),
                _ => Err(format!("expected otsu, supervised or a number, got {other:?}")),
            },
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct BaselineArgs {
    #[arg(value_parser = existing_dir)]
    pub region: PathBuf,
    #[arg(long, value_enum, default_value = "diff")]
    pub method: Method,
    /// `otsu`, `supervised` or a value of the statistic.
    #[arg(long, default_value = "otsu")]
    pub threshold: ThresholdChoice,
    /// Bands per date used by the statistic.
    #[arg(long, default_value_t = 3, value_parser = channel_count)]
    pub channels: usize,
    /// Dataset whose train.txt regions fit the supervised threshold
    /// (default: the region's own ground truth).
    #[arg(long, value_parser = existing_dir)]
    pub fit: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Predicted change map (PGM, nonzero = change).
    #[arg(value_parser = existing_file)]
    pub prediction: PathBuf,
    /// Ground-truth change map (PGM, nonzero = change).
    #[arg(value_parser = existing_file)]
    pub ground_truth: PathBuf,
    /// Also write the report and resolved configuration here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn channel_count(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(c @ (3 | 4 | 10 | 13)) => Ok(c),
        _ => Err(format!("{s:?} is not one of 3, 4, 10, 13")),
    }
}

fn existing_dir(s: &str) -> Result<PathBuf, String> {
    let p = PathBuf::from(s);
    if p.is_dir() {
        Ok(p)
    } else {
        Err(format!("{s} is not a directory"))
    }
}

fn existing_file(s: &str) -> Result<PathBuf, String> {
    let p = PathBuf::from(s);
    if p.is_file() {
        Ok(p)
    } else {
        Err(format!("{s} is not a file"))
    }
}
