//! Central finite-difference checking of analytic parameter gradients.
//!
//! Every layer is affine in its own parameters, so perturbing one value by
//! `±h` moves that layer's output by exactly `±h` times a known pattern
//! (a shifted input plane for a kernel weight, a constant for a bias, one
//! input value for a dense weight). The checker builds those perturbed
//! outputs directly and only re-runs the layers downstream of them, many
//! perturbations per batch. A perturbation that moves any ReLU input across
//! zero is excluded, since the difference quotient then straddles the kink.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{forward_all, softmax_rows, weighted_cross_entropy, Act, Layer, ParamId, ParamStore};
use crate::patching::{ClassWeights, Label};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub h: f64,
    pub tolerance: f64,
    /// When set and the network has more parameters than this, a
    /// seed-deterministic subsample of this size is checked instead.
    pub max_checked: Option<usize>,
    pub seed: u64,
    /// Perturbations evaluated per batch.
    pub chunk: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            h: 1e-5,
            tolerance: 1e-4,
            max_checked: Some(10_000),
            seed: 0,
            chunk: 64,
        }
    }
}

impl GradCheckConfig {
    pub fn exhaustive() -> Self {
        GradCheckConfig {
            max_checked: None,
            ..Self::default()
        }
    }
}

/// Floor on the denominator of the relative error, roughly where float64
/// roundoff in a central difference at h = 1e-5 starts to dominate.
pub const RELATIVE_FLOOR: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotReport {
    pub name: String,
    pub len: usize,
    pub checked: usize,
    /// Perturbations skipped because they crossed a ReLU kink.
    pub excluded: usize,
    pub max_relative_error: f64,
    /// Index within the slot of the worst value.
    pub worst_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub loss: f64,
    pub tolerance: f64,
    pub slots: Vec<SlotReport>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.slots.iter().map(|s| s.max_relative_error).fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.slots.iter().map(|s| s.checked).sum()
    }

    pub fn excluded(&self) -> usize {
        self.slots.iter().map(|s| s.excluded).sum()
    }

    pub fn passed(&self) -> bool {
        self.checked() > 0 && self.max_relative_error() < self.tolerance
    }
}

/// Losses at `θ_i + h` and `θ_i − h` for one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub plus: f64,
    pub minus: f64,
    /// Whether either perturbation moved a ReLU input across zero.
    pub crossed_kink: bool,
}

/// A scalar loss of a fixed input, differentiable in a parameter store.
pub trait GradCheckTarget {
    fn params(&self) -> &ParamStore<f64>;

    /// Loss and its analytic gradient, laid out like the store.
    fn loss_and_gradient(&self) -> Result<(f64, Vec<f64>)>;

    /// One probe per entry of `indices` (positions inside slot `id`).
    fn probe(&self, id: ParamId, indices: &[usize], h: f64) -> Result<Vec<Probe>>;
}

/// Compares analytic and central-difference gradients of `target`.
pub fn grad_check(target: &dyn GradCheckTarget, config: &GradCheckConfig) -> Result<GradCheckReport> {
    if !(config.h > 0.0) || config.chunk == 0 {
        return Err(Error::invalid("gradient check needs h > 0 and a non-empty chunk"));
    }
    let params = target.params();
    let (loss, grads) = target.loss_and_gradient()?;
    let total = params.len();
    let sampled = config.max_checked.filter(|&m| total > m);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut slots = Vec::new();
    for id in params.slot_ids() {
        let slot = params.slot(id).clone();
        let indices: Vec<usize> = match sampled {
            None => (0..slot.len).collect(),
            Some(m) => {
                let share = ((slot.len as f64 * m as f64 / total as f64).ceil() as usize).clamp(slot.len.min(8), slot.len);
                let mut picked = sample(&mut rng, slot.len, share).into_vec();
                picked.sort_unstable();
                picked
            }
        };
        let mut report = SlotReport {
            name: slot.name.clone(),
            len: slot.len,
            checked: 0,
            excluded: 0,
            max_relative_error: 0.0,
            worst_index: None,
        };
        for chunk in indices.chunks(config.chunk) {
            for (&i, probe) in chunk.iter().zip(target.probe(id, chunk, config.h)?) {
                if probe.crossed_kink {
                    report.excluded += 1;
                    continue;
                }
                let numeric = (probe.plus - probe.minus) / (2.0 * config.h);
                let err = relative_error(grads[slot.offset + i], numeric);
                report.checked += 1;
                if err > report.max_relative_error || report.worst_index.is_none() {
                    report.max_relative_error = report.max_relative_error.max(err);
                    report.worst_index = Some(i);
                }
            }
        }
        slots.push(report);
    }
    Ok(GradCheckReport {
        loss,
        tolerance: config.tolerance,
        slots,
    })
}

/// Index of the layer that owns parameter slot `id`.
pub(crate) fn owner(layers: &[Layer], id: ParamId) -> Option<usize> {
    layers.iter().position(|l| l.param_ids().contains(&id))
}

/// Output of `layer` for `±h` perturbations of the listed values of slot
/// `id`: `2 · indices.len()` examples, `+h` then `−h` for each index.
/// `input` and `base_out` are the unperturbed single-example activations.
pub(crate) fn perturbed_outputs(
    layer: &Layer,
    id: ParamId,
    indices: &[usize],
    h: f64,
    input: &Act<f64>,
    base_out: &Act<f64>,
) -> Result<Act<f64>> {
    if input.n != 1 || base_out.n != 1 {
        return Err(Error::invalid("gradient checks run on a single example"));
    }
    let per = base_out.per_example();
    let mut data = Vec::with_capacity(2 * indices.len() * per);
    let mut delta = vec![0.0; per];
    for &idx in indices {
        delta.fill(0.0);
        match layer {
            Layer::Conv { spec, kernel, bias } => {
                let (oh, ow) = (base_out.h, base_out.w);
                if id == *kernel {
                    let o = idx % spec.c_out;
                    let c = (idx / spec.c_out) % spec.c_in;
                    let dx = (idx / (spec.c_out * spec.c_in)) % spec.k;
                    let dy = idx / (spec.c_out * spec.c_in * spec.k);
                    for y in 0..oh {
                        for x in 0..ow {
                            delta[(y * ow + x) * spec.c_out + o] = input.data[((y + dy) * input.w + x + dx) * input.c + c];
                        }
                    }
                } else if id == *bias {
                    for px in delta.chunks_exact_mut(spec.c_out) {
                        px[idx] = 1.0;
                    }
                } else {
                    return Err(Error::invalid("parameter does not belong to this layer"));
                }
            }
            Layer::Dense { spec, weights, bias } => {
                if id == *weights {
                    delta[idx % spec.n_out] = input.data[idx / spec.n_out];
                } else if id == *bias {
                    delta[idx] = 1.0;
                } else {
                    return Err(Error::invalid("parameter does not belong to this layer"));
                }
            }
            Layer::Relu => return Err(Error::invalid("activation layers have no parameters")),
        }
        for sign in [1.0, -1.0] {
            data.extend(base_out.data.iter().zip(&delta).map(|(b, d)| b + sign * h * d));
        }
    }
    Act::new(2 * indices.len(), base_out.h, base_out.w, base_out.c, data)
}

/// Runs a batch of perturbed activations through `layers`, flagging the
/// examples whose ReLU inputs changed sign relative to `base_inputs`
/// (the unperturbed input of each layer).
pub(crate) fn propagate(
    layers: &[Layer],
    params: &ParamStore<f64>,
    mut x: Act<f64>,
    base_inputs: &[Act<f64>],
    crossed: &mut [bool],
) -> Result<Act<f64>> {
    debug_assert_eq!(crossed.len(), x.n);
    for (layer, base) in layers.iter().zip(base_inputs) {
        if matches!(layer, Layer::Relu) {
            let per = base.data.len();
            for (flag, ex) in crossed.iter_mut().zip(x.data.chunks_exact(per)) {
                if !*flag {
                    *flag = ex.iter().zip(&base.data).any(|(a, b)| (*a > 0.0) != (*b > 0.0));
                }
            }
        }
        x = layer.forward(params, &x)?;
    }
    Ok(x)
}

/// Weighted cross-entropy of each row of a two-logit batch.
pub(crate) fn row_losses(logits: &Act<f64>, label: Label, weights: &ClassWeights) -> Vec<f64> {
    softmax_rows(&logits.data, 2)
        .chunks_exact(2)
        .map(|p| weighted_cross_entropy(p, label, weights).0)
        .collect()
}

/// Pairs up `+h, −h` rows into probes.
pub(crate) fn probes_from(losses: &[f64], crossed: &[bool]) -> Vec<Probe> {
    losses
        .chunks_exact(2)
        .zip(crossed.chunks_exact(2))
        .map(|(l, c)| Probe {
            plus: l[0],
            minus: l[1],
            crossed_kink: c[0] || c[1],
        })
        .collect()
}

/// A plain layer stack ending in two logits, evaluated on one example.
#[derive(Debug, Clone)]
pub struct Sequential<'a> {
    pub layers: &'a [Layer],
    pub params: &'a ParamStore<f64>,
    pub input: Act<f64>,
    pub label: Label,
    pub weights: ClassWeights,
}

impl Sequential<'_> {
    fn activations(&self) -> Result<Vec<Act<f64>>> {
        let acts = forward_all(self.layers, self.params, self.input.clone())?;
        if acts.last().map(|a| a.per_example()) != Some(2) {
            return Err(Error::DimensionMismatch("gradient checks need a two-logit output".into()));
        }
        Ok(acts)
    }
}

impl GradCheckTarget for Sequential<'_> {
    fn params(&self) -> &ParamStore<f64> {
        self.params
    }

    fn loss_and_gradient(&self) -> Result<(f64, Vec<f64>)> {
        let acts = self.activations()?;
        let probs = softmax_rows(&acts.last().expect("output").data, 2);
        let (loss, g) = weighted_cross_entropy(&probs, self.label, &self.weights);
        let mut grads = self.params.zeros_like();
        let g = Act::new(1, 1, 1, 2, g)?;
        super::backward_all(self.layers, self.params, &acts, g, &mut grads, false)?;
        Ok((loss, grads))
    }

    fn probe(&self, id: ParamId, indices: &[usize], h: f64) -> Result<Vec<Probe>> {
        let acts = self.activations()?;
        let l = owner(self.layers, id).ok_or_else(|| Error::invalid("parameter is not used by any layer"))?;
        let batch = perturbed_outputs(&self.layers[l], id, indices, h, &acts[l], &acts[l + 1])?;
        let mut crossed = vec![false; batch.n];
        let out = propagate(&self.layers[l + 1..], self.params, batch, &acts[l + 1..], &mut crossed)?;
        Ok(probes_from(&row_losses(&out, self.label, &self.weights), &crossed))
    }
}
