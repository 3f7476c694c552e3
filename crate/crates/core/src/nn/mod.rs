//! The fixed layer vocabulary the two architectures need: valid 2-D
//! convolution, dense layers, ReLU, softmax with weighted cross-entropy,
//! optimizers, and a finite-difference gradient checker.
//!
//! Activations are batched and channel-interleaved (`n × h × w × c`,
//! row-major). Dense layers read the same buffers flattened per example.
//! Everything is generic over [`Scalar`] so training can run in `f32` while
//! gradient checks run in `f64`.

mod activation;
mod conv;
mod dense;
mod gemm;
pub mod gradcheck;
mod loss;
mod optim;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::Range;

use num_traits::{Float, FromPrimitive};

use crate::{Error, Result};

pub use activation::{relu, relu_backward, softmax, softmax_rows};
pub use conv::{ConvLayer, ConvSpec};
pub use dense::{DenseLayer, DenseSpec};
pub use gradcheck::{grad_check, relative_error, GradCheckConfig, GradCheckReport, GradCheckTarget, Probe, Sequential, SlotReport};
pub use loss::{weighted_cross_entropy, weighted_cross_entropy_batch, LOG_FLOOR};
pub use optim::{Adam, AdamConfig, Sgd};

/// Floating-point element type of tensors and parameters.
pub trait Scalar: Float + FromPrimitive + Default + Debug + Send + Sync + Sum + 'static {
    /// `c = op(a) · op(b) (+ c)`, all buffers row-major. `op(a)` is `m × k`
    /// and `op(b)` is `k × n`; a transposed operand is stored as its
    /// transpose (`k × m`, `n × k`).
    #[allow(clippy::too_many_arguments)]
    fn gemm(m: usize, k: usize, n: usize, a: &[Self], a_t: bool, b: &[Self], b_t: bool, c: &mut [Self], accumulate: bool);

    /// Logit gradients and first moments below this magnitude, and second
    /// moments below its square, are flushed to zero.
    const NEGLIGIBLE: f64;

    #[inline]
    fn flush_below(self, limit: Self) -> Self {
        if self.abs() < limit {
            Self::zero()
        } else {
            self
        }
    }

    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite float")
    }
}

impl Scalar for f32 {
    const NEGLIGIBLE: f64 = 1e-12;

    fn gemm(m: usize, k: usize, n: usize, a: &[f32], a_t: bool, b: &[f32], b_t: bool, c: &mut [f32], accumulate: bool) {
        let s = gemm::strides(m, k, n, a.len(), a_t, b.len(), b_t, c.len());
        // SAFETY: `strides` checked that every index reached through these
        // strides lies inside the corresponding slice.
        unsafe {
            matrixmultiply::sgemm(
                m, k, n, 1.0, a.as_ptr(), s.rsa, s.csa, b.as_ptr(), s.rsb, s.csb,
                if accumulate { 1.0 } else { 0.0 }, c.as_mut_ptr(), s.rsc, s.csc,
            );
        }
    }
}

impl Scalar for f64 {
    const NEGLIGIBLE: f64 = 1e-150;

    fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64], accumulate: bool) {
        let s = gemm::strides(m, k, n, a.len(), a_t, b.len(), b_t, c.len());
        // SAFETY: see the f32 impl.
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, 1.0, a.as_ptr(), s.rsa, s.csa, b.as_ptr(), s.rsb, s.csb,
                if accumulate { 1.0 } else { 0.0 }, c.as_mut_ptr(), s.rsc, s.csc,
            );
        }
    }
}

/// Dense tensor with a row-major value buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![T::zero(); n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Batched activation: `n` examples of `h × w × c` values each.
#[derive(Debug, Clone, PartialEq)]
pub struct Act<T> {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Act<T> {
    pub fn new(n: usize, h: usize, w: usize, c: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * h * w * c {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {n}x{h}x{w}x{c}",
                data.len()
            )));
        }
        Ok(Act { n, h, w, c, data })
    }

    /// Values of one example.
    pub fn per_example(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn example(&self, i: usize) -> &[T] {
        let s = self.per_example();
        &self.data[i * s..(i + 1) * s]
    }

    pub fn to_tensor(&self) -> Tensor<T> {
        Tensor {
            shape: vec![self.n, self.h, self.w, self.c],
            data: self.data.clone(),
        }
    }
}

/// Handle to one parameter tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSlot {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// Every trainable value of a network in one contiguous buffer. Layers hold
/// [`ParamId`]s into the store, so two layers sharing an id share storage.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    values: Vec<T>,
    slots: Vec<ParamSlot>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore {
            values: Vec::new(),
            slots: Vec::new(),
        }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn add(&mut self, name: impl Into<String>, values: Vec<T>) -> ParamId {
        let slot = ParamSlot {
            name: name.into(),
            offset: self.values.len(),
            len: values.len(),
        };
        self.values.extend(values);
        self.slots.push(slot);
        ParamId(self.slots.len() - 1)
    }

    pub fn range(&self, id: ParamId) -> Range<usize> {
        let s = &self.slots[id.0];
        s.offset..s.offset + s.len
    }

    pub fn get(&self, id: ParamId) -> &[T] {
        &self.values[self.range(id)]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [T] {
        let r = self.range(id);
        &mut self.values[r]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn slots(&self) -> &[ParamSlot] {
        &self.slots
    }

    pub fn slot_ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.slots.len()).map(ParamId)
    }

    pub fn slot(&self, id: ParamId) -> &ParamSlot {
        &self.slots[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zeros_like(&self) -> Vec<T> {
        vec![T::zero(); self.values.len()]
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            values: self.values.iter().map(|v| U::of(v.as_f64())).collect(),
            slots: self.slots.clone(),
        }
    }
}

/// One stage of a feed-forward stack.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv { spec: ConvSpec, kernel: ParamId, bias: ParamId },
    Dense { spec: DenseSpec, weights: ParamId, bias: ParamId },
    Relu,
}

impl Layer {
    pub fn forward<T: Scalar>(&self, params: &ParamStore<T>, x: &Act<T>) -> Result<Act<T>> {
        match self {
            Layer::Conv { spec, kernel, bias } => spec.forward_batch(params.get(*kernel), params.get(*bias), x),
            Layer::Dense { spec, weights, bias } => spec.forward_batch(params.get(*weights), params.get(*bias), x),
            Layer::Relu => Ok(Act {
                data: relu(&x.data),
                ..*x
            }),
        }
    }

    /// Accumulates parameter gradients into `grads` (laid out like the
    /// store) and returns the input gradient when `want_input` is set.
    pub fn backward<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        input: &Act<T>,
        grad_out: &Act<T>,
        grads: &mut [T],
        want_input: bool,
    ) -> Result<Option<Act<T>>> {
        match self {
            Layer::Conv { spec, kernel, bias } => {
                let (gk, gb) = split_two(grads, params.range(*kernel), params.range(*bias));
                spec.backward_batch(params.get(*kernel), input, grad_out, gk, gb, want_input)
            }
            Layer::Dense { spec, weights, bias } => {
                let (gw, gb) = split_two(grads, params.range(*weights), params.range(*bias));
                spec.backward_batch(params.get(*weights), input, grad_out, gw, gb, want_input)
            }
            Layer::Relu => {
                if grad_out.data.len() != input.data.len() {
                    return Err(Error::DimensionMismatch("relu gradient shape".into()));
                }
                Ok(want_input.then(|| Act {
                    data: relu_backward(&input.data, &grad_out.data),
                    ..*input
                }))
            }
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        match self {
            Layer::Conv { kernel, bias, .. } => vec![*kernel, *bias],
            Layer::Dense { weights, bias, .. } => vec![*weights, *bias],
            Layer::Relu => Vec::new(),
        }
    }
}

/// Two disjoint mutable sub-slices of `buf`.
fn split_two<'a, T>(buf: &'a mut [T], a: Range<usize>, b: Range<usize>) -> (&'a mut [T], &'a mut [T]) {
    assert!(a.end <= b.start || b.end <= a.start, "overlapping parameter ranges");
    if a.start < b.start {
        let (lo, hi) = buf.split_at_mut(b.start);
        (&mut lo[a], &mut hi[..b.end - b.start])
    } else {
        let (lo, hi) = buf.split_at_mut(a.start);
        (&mut hi[..a.end - a.start], &mut lo[b])
    }
}

/// Runs `layers` on `x`, returning every intermediate activation:
/// `acts[0]` is the input and `acts[i + 1]` the output of layer `i`.
pub fn forward_all<T: Scalar>(layers: &[Layer], params: &ParamStore<T>, x: Act<T>) -> Result<Vec<Act<T>>> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(x);
    for layer in layers {
        let next = layer.forward(params, acts.last().expect("non-empty"))?;
        acts.push(next);
    }
    Ok(acts)
}

/// Runs `layers` on `x` without keeping intermediates.
pub fn forward<T: Scalar>(layers: &[Layer], params: &ParamStore<T>, mut x: Act<T>) -> Result<Act<T>> {
    for layer in layers {
        x = layer.forward(params, &x)?;
    }
    Ok(x)
}

/// Back-propagates `grad` through `layers` given the activations recorded by
/// [`forward_all`].
pub fn backward_all<T: Scalar>(
    layers: &[Layer],
    params: &ParamStore<T>,
    acts: &[Act<T>],
    mut grad: Act<T>,
    grads: &mut [T],
    want_input: bool,
) -> Result<Option<Act<T>>> {
    debug_assert_eq!(acts.len(), layers.len() + 1);
    for (i, layer) in layers.iter().enumerate().rev() {
        let need = want_input || i > 0;
        match layer.backward(params, &acts[i], &grad, grads, need)? {
            Some(g) => grad = g,
            None => return Ok(None),
        }
    }
    Ok(Some(grad))
}
