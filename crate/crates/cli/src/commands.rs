use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use changecnn::baselines::{
    difference_image, otsu_threshold, supervised_threshold, BaselineMethod, BaselineParams, DifferenceImage,
    DEFAULT_OTSU_BINS,
};
use changecnn::dataset::{generate_synthetic, pgm, write_region, BinaryMap, ChannelMode, ImagePair, RegionLayout};
use changecnn::inference::{gaussian_kernel, threshold_map, vote_map, write_change_map};
use changecnn::metrics::{confusion, report, Confusion, EvalReport};
use changecnn::models::{load_model, save_model, train_with, TrainConfig};
use changecnn::PATCH_SIZE;
use serde::Serialize;

use crate::args::{BaselineArgs, EvalArgs, InferArgs, StatsArgs, SynthArgs, ThresholdChoice, TrainArgs};
use crate::convert::SPLIT_FILES;
use crate::output::{create_dir, load_region, load_split, write_json, RunContext};

pub const MODEL_FILE: &str = "model.bin";
pub const TRAIN_LOG_FILE: &str = "train_log.json";
pub const PROBABILITY_FILE: &str = "probability.pgm";
pub const CHANGE_FILE: &str = "change.pgm";
pub const STATISTIC_FILE: &str = "statistic.pgm";

#[derive(Serialize)]
struct BandRange {
    band: String,
    earlier: (f32, f32),
    later: (f32, f32),
}

#[derive(Serialize)]
struct RegionStats {
    region_id: String,
    width: usize,
    height: usize,
    change_pixels: Option<usize>,
    change_fraction: Option<f64>,
    bands: Vec<BandRange>,
}

#[derive(Serialize)]
struct DatasetStats {
    regions: Vec<RegionStats>,
    change_pixels: usize,
    no_change_pixels: usize,
}

pub fn stats(args: &StatsArgs) -> Result<()> {
    let layout = RegionLayout::default();
    let mut dirs: Vec<_> = std::fs::read_dir(&args.dataset)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(&layout.meta).is_file())
        .collect();
    dirs.sort();
    ensure!(!dirs.is_empty(), "{} contains no regions", args.dataset.display());
    let mut out = DatasetStats {
        regions: Vec::new(),
        change_pixels: 0,
        no_change_pixels: 0,
    };
    for dir in dirs {
        let pair = load_region(&dir)?;
        let change = pair.ground_truth.as_ref().map(BinaryMap::count_ones);
        if let (Some(gt), Some(c)) = (&pair.ground_truth, change) {
            out.change_pixels += c;
            out.no_change_pixels += gt.values.len() - c;
        }
        let n = pair.width() * pair.height();
        out.regions.push(RegionStats {
            bands: pair
                .earlier
                .bands()
                .map(|(id, b)| BandRange {
                    band: id.to_string(),
                    earlier: b.min_max(),
                    later: pair.later.band(id).map_or((0.0, 0.0), |l| l.min_max()),
                })
                .collect(),
            region_id: pair.region_id,
            width: pair.earlier.grid_width(),
            height: pair.earlier.grid_height(),
            change_pixels: change,
            change_fraction: change.map(|c| c as f64 / n as f64),
        });
    }
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

pub fn synth(args: &SynthArgs, ctx: &RunContext) -> Result<()> {
    let n = args.n as usize;
    let n_test = args.n_test.map_or(n / 4, |t| t as usize);
    ensure!(n_test < n, "--n-test {n_test} leaves no training regions out of {n}");
    let pairs = generate_synthetic(ctx.seed, n, args.size, args.channels as usize)?;
    create_dir(&args.out)?;
    let layout = RegionLayout::default();
    for pair in &pairs {
        write_region(&args.out.join(&pair.region_id), pair, &layout)?;
    }
    let ids: Vec<&str> = pairs.iter().map(|p| p.region_id.as_str()).collect();
    let (train, test) = ids.split_at(n - n_test);
    for (name, list) in SPLIT_FILES.iter().zip([train, test]) {
        let text: String = list.iter().map(|id| format!("{id}\n")).collect();
        std::fs::write(args.out.join(name), text)?;
    }
    ctx.write_config(&args.out, "synth", args)?;
    eprintln!("wrote {} regions ({} train, {} test) to {}", n, train.len(), test.len(), args.out.display());
    Ok(())
}

pub fn train(args: &TrainArgs, ctx: &RunContext) -> Result<()> {
    let config = TrainConfig {
        arch: args.arch.into(),
        channels: ChannelMode::from_count(args.channels)?,
        epochs: args.epochs,
        batch_size: args.batch,
        learning_rate: args.lr,
        seed: ctx.seed,
        class_weights: args.class_weights.into(),
        center_stride: args.center_stride,
    };
    config.validate()?;
    let pairs = load_split(&args.dataset, &args.split)?;
    create_dir(&args.out)?;
    ctx.write_config(&args.out, "train", args)?;
    let epochs = config.epochs;
    let (model, log) = train_with(&pairs, &config, |e| {
        eprintln!(
            "epoch {:>3}/{epochs}  loss {:.4}  change {:.2}%  no-change {:.2}%  {:.1}s",
            e.epoch,
            e.mean_loss,
            100.0 * e.change_accuracy,
            100.0 * e.no_change_accuracy,
            e.wall_seconds
        );
    })?;
    save_model(&model, &args.out.join(MODEL_FILE))?;
    write_json(&args.out.join(TRAIN_LOG_FILE), &log)?;
    Ok(())
}

#[derive(Serialize)]
struct InferRecord {
    region_id: String,
    width: usize,
    height: usize,
    arch: String,
    channels: usize,
    stride: u64,
    sigma: f64,
    kernel_size: usize,
    threshold: f64,
    change_pixels: usize,
    evaluation: Option<Evaluation>,
}

#[derive(Serialize)]
struct Evaluation {
    confusion: Confusion,
    report: EvalReport,
}

fn evaluate(pred: &BinaryMap, pair: &ImagePair) -> Result<Option<Evaluation>> {
    let Some(gt) = &pair.ground_truth else {
        return Ok(None);
    };
    let c = confusion(pred, gt)?;
    Ok(Some(Evaluation {
        confusion: c,
        report: report(&c),
    }))
}

pub fn infer(args: &InferArgs, ctx: &RunContext) -> Result<()> {
    ensure!(args.threshold.is_finite(), "threshold must be finite");
    let model = load_model(&args.model).with_context(|| format!("loading model {}", args.model.display()))?;
    let pair = load_region(&args.region)?;
    let stacks = model
        .prepare(&pair)
        .with_context(|| format!("region {} lacks the model's {} channels", pair.region_id, model.mode().count()))?;
    let kernel = gaussian_kernel(PATCH_SIZE, args.sigma)?;
    let map = vote_map(&model, &stacks, args.stride as usize, &kernel)?;
    let change = threshold_map(&map, args.threshold)?;
    create_dir(&args.out)?;
    ctx.write_config(&args.out, "infer", args)?;
    map.write_pgm(&args.out.join(PROBABILITY_FILE))?;
    write_change_map(&change, &args.out.join(CHANGE_FILE))?;
    let record = InferRecord {
        evaluation: evaluate(&change, &pair)?,
        region_id: pair.region_id,
        width: map.width,
        height: map.height,
        arch: model.network.arch().kind.to_string(),
        channels: model.network.arch().channels,
        stride: args.stride,
        sigma: args.sigma,
        kernel_size: PATCH_SIZE,
        threshold: args.threshold,
        change_pixels: change.count_ones(),
    };
    write_json(&args.out.join("infer.json"), &record)?;
    if let Some(e) = &record.evaluation {
        print_report(&e.report);
    }
    Ok(())
}

#[derive(Serialize)]
struct BaselineRecord {
    region_id: String,
    method: BaselineMethod,
    rule: ThresholdChoice,
    threshold: f64,
    statistic_min: f64,
    statistic_max: f64,
    change_pixels: usize,
    evaluation: Option<Evaluation>,
}

fn fit_supervised(args: &BaselineArgs, pair: &ImagePair, diff: &DifferenceImage) -> Result<f64> {
    let method = BaselineMethod::from(args.method);
    let params = BaselineParams::default();
    let mode = ChannelMode::from_count(args.channels)?;
    let owned: Vec<(DifferenceImage, BinaryMap)> = match &args.fit {
        Some(dataset) => load_split(dataset, Path::new("train.txt"))?
            .into_iter()
            .map(|p| {
                let gt = p.ground_truth.clone().with_context(|| format!("fit region {} has no ground truth", p.region_id))?;
                Ok((difference_image(method, &p.stacks(mode)?, &params)?, gt))
            })
            .collect::<Result<_>>()?,
        None => match &pair.ground_truth {
            Some(gt) => vec![(diff.clone(), gt.clone())],
            None => bail!("a supervised threshold needs labels: region {} has no ground truth and --fit was not given", pair.region_id),
        },
    };
    let samples: Vec<(&DifferenceImage, &BinaryMap)> = owned.iter().map(|(d, g)| (d, g)).collect();
    Ok(supervised_threshold(&samples)?)
}

pub fn baseline(args: &BaselineArgs, ctx: &RunContext) -> Result<()> {
    let pair = load_region(&args.region)?;
    let stacks = pair.stacks(ChannelMode::from_count(args.channels)?)?;
    let method = BaselineMethod::from(args.method);
    let diff = difference_image(method, &stacks, &BaselineParams::default())?;
    create_dir(&args.out)?;
    ctx.write_config(&args.out, "baseline", args)?;
    diff.write_pgm(&args.out.join(STATISTIC_FILE), &args.out.join("statistic.json"))?;
    let threshold = match args.threshold {
        ThresholdChoice::Otsu => otsu_threshold(&diff, DEFAULT_OTSU_BINS).context("Otsu threshold")?,
        ThresholdChoice::Supervised => fit_supervised(args, &pair, &diff)?,
        ThresholdChoice::Value(t) => t,
    };
    let change = diff.threshold(threshold);
    write_change_map(&change, &args.out.join(CHANGE_FILE))?;
    let (statistic_min, statistic_max) = diff.min_max();
    let record = BaselineRecord {
        evaluation: evaluate(&change, &pair)?,
        region_id: pair.region_id,
        method,
        rule: args.threshold,
        threshold,
        statistic_min,
        statistic_max,
        change_pixels: change.count_ones(),
    };
    write_json(&args.out.join("baseline.json"), &record)?;
    if let Some(e) = &record.evaluation {
        print_report(&e.report);
    }
    Ok(())
}

fn read_map(path: &Path) -> Result<BinaryMap> {
    let g = pgm::read(path)?;
    let values = g.samples.iter().map(|&v| u8::from(v != 0)).collect();
    Ok(BinaryMap::new(g.width, g.height, values)?)
}

pub fn eval(args: &EvalArgs, ctx: &RunContext) -> Result<()> {
    let pred = read_map(&args.prediction)?;
    let gt = read_map(&args.ground_truth)?;
    let c = confusion(&pred, &gt)?;
    let result = Evaluation {
        confusion: c,
        report: report(&c),
    };
    println!("{}", serde_json::to_string_pretty(&result)?);
    if let Some(out) = &args.out {
        create_dir(out)?;
        ctx.write_config(out, "eval", args)?;
        write_json(&out.join("eval.json"), &result)?;
    }
    Ok(())
}

fn print_report(r: &EvalReport) {
    use changecnn::metrics::format_percent as pct;
    eprintln!(
        "overall {}%  change {}%  no-change {}%  f1 {:.4}",
        pct(r.overall_accuracy),
        pct(r.change_accuracy),
        pct(r.no_change_accuracy),
        r.f1
    );
}
