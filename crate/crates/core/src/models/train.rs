use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::network::{ArchKind, Architecture, Network};
use crate::dataset::{apply_normalization, compute_normalization, ChannelMode, ImagePair, NormalizationStats, PairStacks};
use crate::nn::{weighted_cross_entropy_batch, Adam, AdamConfig};
use crate::patching::{class_weights, ClassWeights, Label, TrainingRegion, TrainingStream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeightSource {
    /// Inversely proportional to class frequency in the training centers.
    Inverse,
    Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub arch: ArchKind,
    pub channels: ChannelMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub class_weights: ClassWeightSource,
    /// Spacing of the training center grid. Every epoch visits each center
    /// under all eight augmentations.
    pub center_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            arch: ArchKind::EarlyFusion,
            channels: ChannelMode::C3,
            epochs: 30,
            batch_size: 128,
            learning_rate: 1e-3,
            seed: 42,
            class_weights: ClassWeightSource::Inverse,
            center_stride: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.center_stride == 0 {
            return Err(Error::invalid("center stride must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} must be positive", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// Counted from 1.
    pub epoch: usize,
    /// Mean weighted loss over the epoch's batches.
    pub mean_loss: f64,
    pub change_accuracy: f64,
    pub no_change_accuracy: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub class_weights: ClassWeights,
    pub n_change: u64,
    pub n_no_change: u64,
    pub items_per_epoch: usize,
    /// Mean weighted loss of the freshly initialized network on the first
    /// batches of epoch 0, before any update.
    pub initial_loss: f64,
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.mean_loss)
    }
}

/// A trained network together with the normalization its inputs need.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeModel {
    pub network: Network<f32>,
    pub normalization: NormalizationStats,
}

impl ChangeModel {
    pub fn new(network: Network<f32>, normalization: NormalizationStats) -> Result<Self> {
        if normalization.channels() != network.arch().channels {
            return Err(Error::Incompatible(format!(
                "normalization covers {} channels, network takes {}",
                normalization.channels(),
                network.arch().channels
            )));
        }
        Ok(ChangeModel { network, normalization })
    }

    pub fn mode(&self) -> ChannelMode {
        ChannelMode::from_count(self.network.arch().channels).expect("architectures only accept supported counts")
    }

    /// Selects the model's channels from `pair` and normalizes them.
    pub fn prepare(&self, pair: &ImagePair) -> Result<PairStacks> {
        let stacks = pair.stacks(self.mode())?;
        PairStacks::new(
            apply_normalization(&stacks.earlier, &self.normalization)?,
            apply_normalization(&stacks.later, &self.normalization)?,
        )
    }
}

/// Batches evaluated, without updates, to estimate the initial loss.
const INITIAL_LOSS_BATCHES: usize = 8;

pub fn train(pairs: &[ImagePair], config: &TrainConfig) -> Result<(ChangeModel, TrainLog)> {
    train_with(pairs, config, |_| {})
}

/// Trains a network on the labelled pairs, reporting each finished epoch to
/// `on_epoch`. Initialization, batch order and all arithmetic depend only on
/// the data and `config`.
pub fn train_with(
    pairs: &[ImagePair],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(ChangeModel, TrainLog)> {
    config.validate()?;
    let labelled: Vec<&ImagePair> = pairs.iter().filter(|p| p.ground_truth.is_some()).collect();
    if labelled.is_empty() {
        return Err(Error::Degenerate("no labelled training pairs".into()));
    }
    let owned: Vec<ImagePair> = labelled.iter().map(|p| (*p).clone()).collect();
    let normalization = compute_normalization(&owned, config.channels)?;
    let regions = labelled
        .iter()
        .map(|p| {
            let stacks = p.stacks(config.channels)?;
            Ok(TrainingRegion {
                stacks: PairStacks::new(
                    apply_normalization(&stacks.earlier, &normalization)?,
                    apply_normalization(&stacks.later, &normalization)?,
                )?,
                ground_truth: p.ground_truth.clone().expect("filtered"),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let stream = TrainingStream::new(&regions, config.center_stride, config.seed, config.batch_size)?;
    let (n_change, n_no_change) = stream.label_counts();
    let weights = match config.class_weights {
        ClassWeightSource::Inverse => class_weights(n_change, n_no_change)?,
        ClassWeightSource::Unit => ClassWeights::UNIT,
    };

    let arch = Architecture::new(config.arch, config.channels.count())?;
    let mut net = Network::<f32>::new(arch, config.seed)?;
    let mut adam = Adam::new(
        AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        },
        net.params().len(),
    );

    let mut initial = 0.0;
    let mut counted = 0;
    for batch in stream.epoch(0).take(INITIAL_LOSS_BATCHES) {
        let probs = net.predict(&batch.earlier, &batch.later, batch.len)?;
        initial += weighted_cross_entropy_batch(&probs, &batch.labels, &weights).0 as f64;
        counted += 1;
    }
    let initial_loss = initial / counted as f64;

    let mut epochs = Vec::with_capacity(config.epochs);
    let mut grads = net.params().zeros_like();
    for epoch in 0..config.epochs {
        let start = Instant::now();
        let mut loss_sum = 0.0;
        let mut n_batches = 0usize;
        let mut hits = [0u64; 2];
        let mut seen = [0u64; 2];
        for batch in stream.epoch(epoch) {
            let pass = net.forward(&batch.earlier, &batch.later, batch.len)?;
            let (loss, grad_logits) = weighted_cross_entropy_batch(&pass.probs, &batch.labels, &weights);
            if !loss.is_finite() {
                return Err(Error::Degenerate(format!("loss diverged in epoch {}", epoch + 1)));
            }
            for (p, &label) in pass.probs.chunks_exact(2).zip(&batch.labels) {
                let k = label.index();
                seen[k] += 1;
                if Label::from_bool(p[1] > p[0]) == label {
                    hits[k] += 1;
                }
            }
            grads.fill(0.0);
            net.backward(&pass, &grad_logits, &mut grads)?;
            adam.step(net.params_mut().values_mut(), &grads)?;
            loss_sum += loss as f64;
            n_batches += 1;
        }
        let ratio = |k: usize| if seen[k] == 0 { 0.0 } else { hits[k] as f64 / seen[k] as f64 };
        let entry = EpochLog {
            epoch: epoch + 1,
            mean_loss: loss_sum / n_batches as f64,
            change_accuracy: ratio(1),
            no_change_accuracy: ratio(0),
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&entry);
        epochs.push(entry);
    }

    let model = ChangeModel::new(net, normalization)?;
    let log = TrainLog {
        class_weights: weights,
        n_change,
        n_no_change,
        items_per_epoch: stream.len(),
        initial_loss,
        epochs,
    };
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_synthetic;

    fn tiny_dataset() -> Vec<ImagePair> {
        generate_synthetic(5, 2, 32, 3).unwrap()
    }

    fn quick_config() -> TrainConfig {
        TrainConfig {
            arch: ArchKind::Siamese,
            epochs: 2,
            batch_size: 32,
            center_stride: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn same_seed_same_parameters() {
        let data = tiny_dataset();
        let (a, la) = train(&data, &quick_config()).unwrap();
        let (b, lb) = train(&data, &quick_config()).unwrap();
        assert_eq!(a, b);
        assert_eq!(la.epochs.len(), 2);
        for (x, y) in la.epochs.iter().zip(&lb.epochs) {
            assert_eq!((x.mean_loss, x.change_accuracy), (y.mean_loss, y.change_accuracy));
        }
    }

    #[test]
    fn unlabelled_data_is_rejected() {
        let mut data = tiny_dataset();
        for p in &mut data {
            p.ground_truth = None;
        }
        assert!(matches!(train(&data, &quick_config()), Err(Error::Degenerate(_))));
        assert!(train(&tiny_dataset(), &TrainConfig { epochs: 0, ..quick_config() }).is_err());
    }

    #[test]
    fn unit_weights_are_exactly_one() {
        let cfg = TrainConfig {
            class_weights: ClassWeightSource::Unit,
            epochs: 1,
            ..quick_config()
        };
        let (_, log) = train(&tiny_dataset(), &cfg).unwrap();
        assert_eq!(log.class_weights, ClassWeights::UNIT);
        assert!(log.initial_loss.is_finite());
    }
}
