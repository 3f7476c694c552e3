use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{self, softmax_rows, Act, ConvSpec, DenseSpec, Layer, ParamStore, Scalar};
use crate::patching::PatchPair;
use crate::{Error, Result, PATCH_SIZE};

/// Output channels of the seven early-fusion convolutions.
pub const EF_CONV_WIDTHS: [usize; 7] = [32, 32, 64, 64, 128, 128, 128];
/// Width of the early-fusion hidden dense layer.
pub const EF_HIDDEN: usize = 64;
/// Output channels of the four convolutions of each Siamese branch.
pub const SIAM_CONV_WIDTHS: [usize; 4] = [32, 32, 64, 64];
/// Width of the Siamese hidden dense layer.
pub const SIAM_HIDDEN: usize = 128;
/// Kernel size of every convolution.
pub const KERNEL: usize = 3;
/// Channel counts the architectures accept.
pub const SUPPORTED_CHANNELS: [usize; 4] = [3, 4, 10, 13];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    EarlyFusion,
    Siamese,
}

impl ArchKind {
    pub fn short_name(self) -> &'static str {
        match self {
            ArchKind::EarlyFusion => "ef",
            ArchKind::Siamese => "siam",
        }
    }
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for ArchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ef" | "early_fusion" | "early-fusion" => Ok(ArchKind::EarlyFusion),
            "siam" | "siamese" => Ok(ArchKind::Siamese),
            other => Err(Error::invalid(format!("unknown architecture {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub kind: ArchKind,
    /// Channels per date.
    pub channels: usize,
}

impl Architecture {
    pub fn new(kind: ArchKind, channels: usize) -> Result<Self> {
        if !SUPPORTED_CHANNELS.contains(&channels) {
            return Err(Error::invalid(format!(
                "unsupported channel count {channels} (expected 3, 4, 10 or 13)"
            )));
        }
        Ok(Architecture { kind, channels })
    }
}

/// A patch-pair classifier: a convolutional trunk and a dense head over one
/// parameter store.
///
/// Early fusion stacks both patches into `15 × 15 × 2C` and runs the trunk
/// once. The Siamese network runs the same trunk layers (the same
/// [`ParamId`](crate::nn::ParamId)s) on each patch and concatenates the two
/// feature maps, earlier first, before the head. The head ends in two logits
/// ordered (no change, change).
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    arch: Architecture,
    params: ParamStore<T>,
    trunk: Vec<Layer>,
    head: Vec<Layer>,
}

/// Activations recorded by a training forward pass.
#[derive(Debug, Clone)]
pub struct Pass<T> {
    n: usize,
    trunk_a: Vec<Act<T>>,
    trunk_b: Option<Vec<Act<T>>>,
    head: Vec<Act<T>>,
    /// Softmax outputs, `n × 2`.
    pub probs: Vec<T>,
}

impl<T> Pass<T> {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// Builds the layer lists of `arch`, drawing parameters from `init`, which
/// receives `(fan_in, len)` and returns `len` values.
fn assemble<T: Scalar>(arch: Architecture, mut init: impl FnMut(usize, usize) -> Vec<T>) -> Result<Network<T>> {
    let mut params = ParamStore::default();
    let (widths, first_in, hidden): (&[usize], usize, usize) = match arch.kind {
        ArchKind::EarlyFusion => (&EF_CONV_WIDTHS, 2 * arch.channels, EF_HIDDEN),
        ArchKind::Siamese => (&SIAM_CONV_WIDTHS, arch.channels, SIAM_HIDDEN),
    };
    let mut trunk = Vec::new();
    let mut c_in = first_in;
    let mut side = PATCH_SIZE;
    for (i, &c_out) in widths.iter().enumerate() {
        let spec = ConvSpec::new(KERNEL, c_in, c_out)?;
        let kernel = params.add(format!("conv{}.kernel", i + 1), init(spec.fan_in(), spec.kernel_len()));
        let bias = params.add(format!("conv{}.bias", i + 1), vec![T::zero(); c_out]);
        trunk.push(Layer::Conv { spec, kernel, bias });
        trunk.push(Layer::Relu);
        c_in = c_out;
        side -= KERNEL - 1;
    }
    let branches = match arch.kind {
        ArchKind::EarlyFusion => 1,
        ArchKind::Siamese => 2,
    };
    let features = side * side * c_in * branches;
    let mut head = Vec::new();
    for (i, (n_in, n_out)) in [(features, hidden), (hidden, 2)].into_iter().enumerate() {
        let spec = DenseSpec::new(n_in, n_out)?;
        let weights = params.add(format!("dense{}.weights", i + 1), init(n_in, spec.weights_len()));
        let bias = params.add(format!("dense{}.bias", i + 1), vec![T::zero(); n_out]);
        head.push(Layer::Dense { spec, weights, bias });
        if i == 0 {
            head.push(Layer::Relu);
        }
    }
    Ok(Network {
        arch,
        params,
        trunk,
        head,
    })
}

/// Early fusion: seven valid 3×3 convolutions (15 → 1 spatially), then dense
/// 128 → 64 → 2.
pub fn build_ef(channels: usize, seed: u64) -> Result<Network<f32>> {
    Network::new(Architecture::new(ArchKind::EarlyFusion, channels)?, seed)
}

/// Siamese: four shared valid 3×3 convolutions per branch (15 → 7), branch
/// features concatenated to 7×7×128, then dense 6272 → 128 → 2.
pub fn build_siam(channels: usize, seed: u64) -> Result<Network<f32>> {
    Network::new(Architecture::new(ArchKind::Siamese, channels)?, seed)
}

impl<T: Scalar> Network<T> {
    /// Uniform He initialization, `U(−√(6/fan_in), √(6/fan_in))`, zero biases.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        assemble(arch, |fan_in, len| {
            let bound = (6.0 / fan_in as f64).sqrt();
            (0..len).map(|_| T::of(rng.gen_range(-bound..bound))).collect()
        })
    }

    /// Architecture skeleton with all parameters zero.
    pub fn zeroed(arch: Architecture) -> Result<Self> {
        assemble(arch, |_, len| vec![T::zero(); len])
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn trunk(&self) -> &[Layer] {
        &self.trunk
    }

    pub fn head(&self) -> &[Layer] {
        &self.head
    }

    /// Every layer in storage order: trunk (stored once), then head.
    pub fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.trunk.iter().chain(&self.head)
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            arch: self.arch,
            params: self.params.cast(),
            trunk: self.trunk.clone(),
            head: self.head.clone(),
        }
    }

    fn patch_act(&self, data: &[T], n: usize) -> Result<Act<T>> {
        Act::new(n, PATCH_SIZE, PATCH_SIZE, self.arch.channels, data.to_vec()).map_err(|_| {
            Error::DimensionMismatch(format!(
                "expected {n} patches of 15x15x{} values, got {} values",
                self.arch.channels,
                data.len()
            ))
        })
    }

    /// Interleaves two activations channel-wise, `a` first.
    pub(crate) fn concat_channels(a: &Act<T>, b: &Act<T>) -> Act<T> {
        debug_assert_eq!((a.n, a.h, a.w), (b.n, b.h, b.w));
        let mut data = Vec::with_capacity(a.data.len() + b.data.len());
        for (pa, pb) in a.data.chunks_exact(a.c).zip(b.data.chunks_exact(b.c)) {
            data.extend_from_slice(pa);
            data.extend_from_slice(pb);
        }
        Act {
            n: a.n,
            h: a.h,
            w: a.w,
            c: a.c + b.c,
            data,
        }
    }

    fn split_channels(g: &Act<T>, c_a: usize) -> (Act<T>, Act<T>) {
        let c_b = g.c - c_a;
        let mut a = Vec::with_capacity(g.data.len() / g.c * c_a);
        let mut b = Vec::with_capacity(g.data.len() / g.c * c_b);
        for px in g.data.chunks_exact(g.c) {
            a.extend_from_slice(&px[..c_a]);
            b.extend_from_slice(&px[c_a..]);
        }
        (Act { c: c_a, data: a, ..*g }, Act { c: c_b, data: b, ..*g })
    }

    /// Forward pass over `n` patch pairs (`n × 15 × 15 × C` buffers each),
    /// recording activations for [`Network::backward`].
    pub fn forward(&self, earlier: &[T], later: &[T], n: usize) -> Result<Pass<T>> {
        let a = self.patch_act(earlier, n)?;
        let b = self.patch_act(later, n)?;
        let (trunk_a, trunk_b, features) = match self.arch.kind {
            ArchKind::EarlyFusion => {
                let acts = nn::forward_all(&self.trunk, &self.params, Self::concat_channels(&a, &b))?;
                let f = acts.last().expect("trunk output").clone();
                (acts, None, f)
            }
            ArchKind::Siamese => {
                let acts_a = nn::forward_all(&self.trunk, &self.params, a)?;
                let acts_b = nn::forward_all(&self.trunk, &self.params, b)?;
                let f = Self::concat_channels(acts_a.last().expect("trunk"), acts_b.last().expect("trunk"));
                (acts_a, Some(acts_b), f)
            }
        };
        let head = nn::forward_all(&self.head, &self.params, features)?;
        let probs = softmax_rows(&head.last().expect("head output").data, 2);
        Ok(Pass {
            n,
            trunk_a,
            trunk_b,
            head,
            probs,
        })
    }

    /// Accumulates parameter gradients of a loss whose logit gradient is
    /// `grad_logits` (`n × 2`). Shared Siamese weights receive the sum of
    /// both branch gradients.
    pub fn backward(&self, pass: &Pass<T>, grad_logits: &[T], grads: &mut [T]) -> Result<()> {
        if grad_logits.len() != 2 * pass.n || grads.len() != self.params.len() {
            return Err(Error::DimensionMismatch("gradient buffer sizes".into()));
        }
        let g = Act::new(pass.n, 1, 1, 2, grad_logits.to_vec())?;
        let g_features = nn::backward_all(&self.head, &self.params, &pass.head, g, grads, true)?.expect("requested");
        match &pass.trunk_b {
            None => {
                nn::backward_all(&self.trunk, &self.params, &pass.trunk_a, g_features, grads, false)?;
            }
            Some(trunk_b) => {
                let c_a = pass.trunk_a.last().expect("trunk").c;
                let (ga, gb) = Self::split_channels(&g_features, c_a);
                nn::backward_all(&self.trunk, &self.params, &pass.trunk_a, ga, grads, false)?;
                nn::backward_all(&self.trunk, &self.params, trunk_b, gb, grads, false)?;
            }
        }
        Ok(())
    }

    /// Class probabilities `(p_no_change, p_change)` for `n` patch pairs.
    pub fn predict(&self, earlier: &[T], later: &[T], n: usize) -> Result<Vec<T>> {
        let a = self.patch_act(earlier, n)?;
        let b = self.patch_act(later, n)?;
        let features = match self.arch.kind {
            ArchKind::EarlyFusion => nn::forward(&self.trunk, &self.params, Self::concat_channels(&a, &b))?,
            ArchKind::Siamese => {
                let fa = nn::forward(&self.trunk, &self.params, a)?;
                let fb = nn::forward(&self.trunk, &self.params, b)?;
                Self::concat_channels(&fa, &fb)
            }
        };
        let logits = nn::forward(&self.head, &self.params, features)?;
        Ok(softmax_rows(&logits.data, 2))
    }

    /// Trunk output for a single branch input (Siamese) or a fused input
    /// (early fusion).
    pub fn trunk_features(&self, input: &[T], n: usize) -> Result<Vec<T>> {
        let c = match self.arch.kind {
            ArchKind::EarlyFusion => 2 * self.arch.channels,
            ArchKind::Siamese => self.arch.channels,
        };
        let x = Act::new(n, PATCH_SIZE, PATCH_SIZE, c, input.to_vec())?;
        Ok(nn::forward(&self.trunk, &self.params, x)?.data)
    }
}

impl Network<f32> {
    /// `(p_no_change, p_change)` for one patch pair.
    pub fn forward_pair(&self, pair: &PatchPair) -> Result<[f64; 2]> {
        if pair.earlier.channels != self.arch.channels || pair.later.channels != self.arch.channels {
            return Err(Error::Incompatible(format!(
                "network expects {} channels, patch has {}",
                self.arch.channels, pair.earlier.channels
            )));
        }
        let p = self.predict(&pair.earlier.data, &pair.later.data, 1)?;
        Ok([p[0] as f64, p[1] as f64])
    }
}

/// Parameter count of an architecture from its layer sizes.
pub fn parameter_count(arch: Architecture) -> usize {
    Network::<f32>::zeroed(arch).map(|n| n.params().len()).unwrap_or(0)
}
