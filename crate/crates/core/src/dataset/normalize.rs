use serde::{Deserialize, Serialize};

use super::{select_channels, ChannelMode, ImagePair, Stack};
use crate::{Error, Result};

/// Lower bound applied to every standard deviation.
pub const MIN_STD: f64 = 1e-6;

/// Per-channel z-score parameters, in the channel order of a [`ChannelMode`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn identity(channels: usize) -> Self {
        NormalizationStats {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }
}

/// Population mean and standard deviation of every selected band over both
/// dates of all training pairs.
pub fn compute_normalization(train_pairs: &[ImagePair], mode: ChannelMode) -> Result<NormalizationStats> {
    if train_pairs.is_empty() {
        return Err(Error::Degenerate("normalization needs at least one training pair".into()));
    }
    let c = mode.count();
    let stacks = train_pairs
        .iter()
        .flat_map(|p| [&p.earlier, &p.later])
        .map(|img| select_channels(img, mode))
        .collect::<Result<Vec<_>>>()?;

    let mut sum = vec![0.0f64; c];
    let mut count = 0usize;
    for s in &stacks {
        for px in s.data.chunks_exact(c) {
            for (acc, &v) in sum.iter_mut().zip(px) {
                *acc += v as f64;
            }
        }
        count += s.width * s.height;
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();

    let mut sq = vec![0.0f64; c];
    for s in &stacks {
        for px in s.data.chunks_exact(c) {
            for ((acc, &v), m) in sq.iter_mut().zip(px).zip(&mean) {
                let d = v as f64 - m;
                *acc += d * d;
            }
        }
    }
    let std = sq.iter().map(|s| (s / count as f64).sqrt().max(MIN_STD)).collect();
    Ok(NormalizationStats { mean, std })
}

pub fn apply_normalization(stack: &Stack, stats: &NormalizationStats) -> Result<Stack> {
    map_channels(stack, stats, |v, m, s| (v - m) / s)
}

pub fn invert_normalization(stack: &Stack, stats: &NormalizationStats) -> Result<Stack> {
    map_channels(stack, stats, |v, m, s| v * s + m)
}

fn map_channels(stack: &Stack, stats: &NormalizationStats, f: impl Fn(f64, f64, f64) -> f64) -> Result<Stack> {
    if stats.channels() < stack.channels || stats.std.len() != stats.mean.len() {
        return Err(Error::invalid(format!(
            "normalization covers {} channels, stack has {}",
            stats.channels(),
            stack.channels
        )));
    }
    let c = stack.channels;
    let mut data = stack.data.clone();
    for px in data.chunks_exact_mut(c) {
        for (ch, v) in px.iter_mut().enumerate() {
            *v = f(*v as f64, stats.mean[ch], stats.std[ch]) as f32;
        }
    }
    Stack::new(stack.width, stack.height, c, data)
}
