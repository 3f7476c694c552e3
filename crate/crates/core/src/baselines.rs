//! Classical difference-image detectors and threshold selection.
//!
//! All three statistics work on raw (unnormalized) channel stacks.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{pgm, BinaryMap, PairStacks};
use crate::patching::mirror_index;
use crate::{Error, Result};

pub const DEFAULT_LOG_EPSILON: f64 = 1.0;
pub const DEFAULT_GLRT_RADIUS: usize = 2;
pub const DEFAULT_OTSU_BINS: usize = 256;
pub const SUPERVISED_CANDIDATES: usize = 256;
/// Lower bound on the window variances of the GLRT.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    Diff,
    LogRatio,
    Glrt,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 3] = [BaselineMethod::Diff, BaselineMethod::LogRatio, BaselineMethod::Glrt];

    pub fn name(self) -> &'static str {
        match self {
            BaselineMethod::Diff => "diff",
            BaselineMethod::LogRatio => "logratio",
            BaselineMethod::Glrt => "glrt",
        }
    }
}

impl fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "diff" | "difference" => Ok(BaselineMethod::Diff),
            "logratio" | "log_ratio" | "log-ratio" => Ok(BaselineMethod::LogRatio),
            "glrt" => Ok(BaselineMethod::Glrt),
            other => Err(Error::invalid(format!("unknown baseline method {other:?}"))),
        }
    }
}

/// Per-pixel nonnegative dissimilarity between the two dates.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceImage {
    pub width: usize,
    pub height: usize,
    pub method: BaselineMethod,
    pub values: Vec<f64>,
}

impl DifferenceImage {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Change where the statistic is at least `t`.
    pub fn threshold(&self, t: f64) -> BinaryMap {
        BinaryMap {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| u8::from(v >= t)).collect(),
        }
    }

    /// Min-max scales to 16 bits and writes the PGM plus a JSON sidecar
    /// recording the scale.
    pub fn write_pgm(&self, pgm_path: &Path, sidecar_path: &Path) -> Result<StatisticScale> {
        let (min, max) = self.min_max();
        let range = max - min;
        let samples: Vec<u16> = self
            .values
            .iter()
            .map(|&v| if range > 0.0 { ((v - min) / range * 65535.0).round() as u16 } else { 0 })
            .collect();
        pgm::write_u16(pgm_path, self.width, self.height, &samples)?;
        let scale = StatisticScale {
            method: self.method,
            min,
            max,
            value_per_count: range / 65535.0,
        };
        let json = serde_json::to_string_pretty(&scale)?;
        std::fs::write(sidecar_path, json + "\n").map_err(|e| Error::io(sidecar_path, e))?;
        Ok(scale)
    }
}

/// `value = min + sample · value_per_count` for a written statistic map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatisticScale {
    pub method: BaselineMethod,
    pub min: f64,
    pub max: f64,
    pub value_per_count: f64,
}

fn checked(stacks: &PairStacks) -> Result<(usize, usize, usize)> {
    if !stacks.earlier.same_shape(&stacks.later) {
        return Err(Error::DimensionMismatch("the two dates have different shapes".into()));
    }
    Ok((stacks.width(), stacks.height(), stacks.channels()))
}

/// Spectral Euclidean distance `sqrt(Σ_c (I2 − I1)²)`.
pub fn image_difference(stacks: &PairStacks) -> Result<DifferenceImage> {
    let (width, height, c) = checked(stacks)?;
    let values = stacks
        .earlier
        .data
        .chunks_exact(c)
        .zip(stacks.later.data.chunks_exact(c))
        .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| (y as f64 - x as f64).powi(2)).sum::<f64>().sqrt())
        .collect();
    Ok(DifferenceImage {
        width,
        height,
        method: BaselineMethod::Diff,
        values,
    })
}

/// `| mean_c [ln(I2 + ε) − ln(I1 + ε)] |`.
pub fn log_ratio(stacks: &PairStacks, epsilon: f64) -> Result<DifferenceImage> {
    let (width, height, c) = checked(stacks)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid(format!("log-ratio epsilon must be positive, got {epsilon}")));
    }
    if stacks.earlier.data.iter().chain(&stacks.later.data).any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::invalid("log-ratio needs nonnegative input values"));
    }
    let values = stacks
        .earlier
        .data
        .chunks_exact(c)
        .zip(stacks.later.data.chunks_exact(c))
        .map(|(a, b)| {
            let s: f64 = a
                .iter()
                .zip(b)
                .map(|(&x, &y)| (y as f64 + epsilon).ln() - (x as f64 + epsilon).ln())
                .sum();
            (s / c as f64).abs()
        })
        .collect();
    Ok(DifferenceImage {
        width,
        height,
        method: BaselineMethod::LogRatio,
        values,
    })
}

fn variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    let mean = sum / n as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (ss / n as f64).max(VARIANCE_FLOOR)
}

/// Windowed Gaussian likelihood ratio of "one population" against "two
/// populations", summed over channels:
/// `Σ_c 2n ln σ̂²₀ − n ln σ̂²₁ − n ln σ̂²₂`, clamped below at 0.
///
/// Windows are `(2r + 1)²` pixels, mirror-padded at the borders, with
/// maximum-likelihood variances.
pub fn glrt(stacks: &PairStacks, radius: usize) -> Result<DifferenceImage> {
    let (width, height, c) = checked(stacks)?;
    if radius < 1 {
        return Err(Error::invalid("GLRT window radius must be at least 1"));
    }
    let r = radius as isize;
    let n = ((2 * radius + 1) * (2 * radius + 1)) as f64;
    let mut values = Vec::with_capacity(width * height);
    let mut w1 = Vec::with_capacity(n as usize);
    let mut w2 = Vec::with_capacity(n as usize);
    for y in 0..height {
        for x in 0..width {
            let mut total = 0.0;
            for ch in 0..c {
                w1.clear();
                w2.clear();
                for dy in -r..=r {
                    let yy = mirror_index(y as isize + dy, height);
                    for dx in -r..=r {
                        let xx = mirror_index(x as isize + dx, width);
                        w1.push(stacks.earlier.get(yy, xx, ch) as f64);
                        w2.push(stacks.later.get(yy, xx, ch) as f64);
                    }
                }
                let v1 = variance(w1.iter().copied());
                let v2 = variance(w2.iter().copied());
                let v0 = variance(w1.iter().chain(&w2).copied());
                total += 2.0 * n * v0.ln() - n * v1.ln() - n * v2.ln();
            }
            values.push(total.max(0.0));
        }
    }
    Ok(DifferenceImage {
        width,
        height,
        method: BaselineMethod::Glrt,
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    pub log_epsilon: f64,
    pub glrt_radius: usize,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams {
            log_epsilon: DEFAULT_LOG_EPSILON,
            glrt_radius: DEFAULT_GLRT_RADIUS,
        }
    }
}

pub fn difference_image(method: BaselineMethod, stacks: &PairStacks, params: &BaselineParams) -> Result<DifferenceImage> {
    match method {
        BaselineMethod::Diff => image_difference(stacks),
        BaselineMethod::LogRatio => log_ratio(stacks, params.log_epsilon),
        BaselineMethod::Glrt => glrt(stacks, params.glrt_radius),
    }
}

/// Otsu's threshold over `n_bins` equal bins spanning `[min, max]`.
///
/// Splitting after bin `k` gives the threshold `min + (k + 1) · width`;
/// the split with the largest between-class variance wins, the smallest `k`
/// on ties. Class means use bin centers.
pub fn otsu_threshold(diff: &DifferenceImage, n_bins: usize) -> Result<f64> {
    otsu_threshold_values(&diff.values, n_bins)
}

pub fn otsu_threshold_values(values: &[f64], n_bins: usize) -> Result<f64> {
    if n_bins < 2 {
        return Err(Error::invalid(format!("Otsu needs at least 2 bins, got {n_bins}")));
    }
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if values.is_empty() || !(max > min) {
        return Err(Error::Degenerate("statistic is constant; no threshold separates two classes".into()));
    }
    let width = (max - min) / n_bins as f64;
    let mut hist = vec![0u64; n_bins];
    for &v in values {
        hist[otsu_bin(v, min, width, n_bins)] += 1;
    }
    let total = values.len() as f64;
    let center = |i: usize| min + (i as f64 + 0.5) * width;
    let grand: f64 = hist.iter().enumerate().map(|(i, &h)| h as f64 * center(i)).sum();
    let (mut w0, mut s0) = (0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (k, &h) in hist.iter().enumerate().take(n_bins - 1) {
        w0 += h as f64;
        s0 += h as f64 * center(k);
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let (m0, m1) = (s0 / w0, (grand - s0) / w1);
        let between = (w0 / total) * (w1 / total) * (m0 - m1) * (m0 - m1);
        if between > best.0 {
            best = (between, k);
        }
    }
    Ok(min + (best.1 + 1) as f64 * width)
}

#[inline]
pub(crate) fn otsu_bin(v: f64, min: f64, width: f64, n_bins: usize) -> usize {
    (((v - min) / width).floor() as usize).min(n_bins - 1)
}

/// Candidate thresholds of [`supervised_threshold`] for a statistic range.
pub fn supervised_candidates(min: f64, max: f64) -> Vec<f64> {
    (0..SUPERVISED_CANDIDATES)
        .map(|i| min + i as f64 * (max - min) / SUPERVISED_CANDIDATES as f64)
        .collect()
}

/// Mean of the per-class accuracies of `v ≥ t` against the labels; a class
/// without pixels is left out of the mean.
pub fn mean_class_accuracy(samples: &[(&DifferenceImage, &BinaryMap)], t: f64) -> f64 {
    let (mut tp, mut pos, mut tn, mut neg) = (0u64, 0u64, 0u64, 0u64);
    for (d, gt) in samples {
        for (&v, &g) in d.values.iter().zip(&gt.values) {
            let pred = v >= t;
            if g != 0 {
                pos += 1;
                tp += u64::from(pred);
            } else {
                neg += 1;
                tn += u64::from(!pred);
            }
        }
    }
    let accs: Vec<f64> = [(tp, pos), (tn, neg)]
        .iter()
        .filter(|(_, n)| *n > 0)
        .map(|&(k, n)| k as f64 / n as f64)
        .collect();
    accs.iter().sum::<f64>() / accs.len().max(1) as f64
}

/// Sweeps 256 thresholds `min + i · (max − min) / 256` over the pooled range
/// of the labelled statistics and returns the first one with the highest
/// mean per-class accuracy.
pub fn supervised_threshold(samples: &[(&DifferenceImage, &BinaryMap)]) -> Result<f64> {
    if samples.is_empty() || samples.iter().all(|(d, _)| d.values.is_empty()) {
        return Err(Error::Degenerate("supervised threshold needs labelled training regions".into()));
    }
    for (d, gt) in samples {
        if (d.width, d.height) != (gt.width, gt.height) {
            return Err(Error::DimensionMismatch("statistic and ground truth differ in size".into()));
        }
    }
    let (min, max) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (d, _)| {
        let (a, b) = d.min_max();
        (lo.min(a), hi.max(b))
    });
    let mut best = (f64::NEG_INFINITY, min);
    for t in supervised_candidates(min, max) {
        let score = mean_class_accuracy(samples, t);
        if score > best.0 {
            best = (score, t);
        }
    }
    Ok(best.1)
}
