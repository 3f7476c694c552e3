use super::{Act, Scalar};
use crate::{Error, Result};

/// Affine map `out = in · W + b` with `W` stored `n_in × n_out`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseSpec {
    pub n_in: usize,
    pub n_out: usize,
}

impl DenseSpec {
    pub fn new(n_in: usize, n_out: usize) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::invalid("dense layer needs non-zero widths"));
        }
        Ok(DenseSpec { n_in, n_out })
    }

    pub fn weights_len(&self) -> usize {
        self.n_in * self.n_out
    }

    /// Each example of `x` is flattened to `n_in` values.
    pub fn forward_batch<T: Scalar>(&self, weights: &[T], bias: &[T], x: &Act<T>) -> Result<Act<T>> {
        self.check(x)?;
        if weights.len() != self.weights_len() || bias.len() != self.n_out {
            return Err(Error::DimensionMismatch("dense parameter sizes".into()));
        }
        let mut out = Vec::with_capacity(x.n * self.n_out);
        for _ in 0..x.n {
            out.extend_from_slice(bias);
        }
        T::gemm(x.n, self.n_in, self.n_out, &x.data, false, weights, false, &mut out, true);
        Act::new(x.n, 1, 1, self.n_out, out)
    }

    /// Accumulates weight and bias gradients; the input gradient comes back
    /// in the input's shape.
    pub fn backward_batch<T: Scalar>(
        &self,
        weights: &[T],
        x: &Act<T>,
        grad_out: &Act<T>,
        grad_weights: &mut [T],
        grad_bias: &mut [T],
        want_input: bool,
    ) -> Result<Option<Act<T>>> {
        self.check(x)?;
        if grad_out.n != x.n || grad_out.per_example() != self.n_out {
            return Err(Error::DimensionMismatch(format!(
                "dense output gradient has {} values per example for {} outputs",
                grad_out.per_example(),
                self.n_out
            )));
        }
        if grad_weights.len() != self.weights_len() || grad_bias.len() != self.n_out {
            return Err(Error::DimensionMismatch("dense gradient buffer sizes".into()));
        }
        for row in grad_out.data.chunks_exact(self.n_out) {
            for (gb, &g) in grad_bias.iter_mut().zip(row) {
                *gb = *gb + g;
            }
        }
        T::gemm(self.n_in, x.n, self.n_out, &x.data, true, &grad_out.data, false, grad_weights, true);
        if !want_input {
            return Ok(None);
        }
        let mut gi = vec![T::zero(); x.n * self.n_in];
        T::gemm(x.n, self.n_out, self.n_in, &grad_out.data, false, weights, true, &mut gi, false);
        Act::new(x.n, x.h, x.w, x.c, gi).map(Some)
    }

    fn check<T: Scalar>(&self, x: &Act<T>) -> Result<()> {
        if x.per_example() != self.n_in {
            return Err(Error::DimensionMismatch(format!(
                "dense layer expects {} inputs, got {}",
                self.n_in,
                x.per_example()
            )));
        }
        Ok(())
    }
}

/// A dense layer that owns its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    pub spec: DenseSpec,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads<T> {
    pub input: Vec<T>,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn new(spec: DenseSpec, weights: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if weights.len() != spec.weights_len() || bias.len() != spec.n_out {
            return Err(Error::DimensionMismatch("dense parameter sizes".into()));
        }
        Ok(DenseLayer { spec, weights, bias })
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        let x = Act::new(1, 1, 1, input.len(), input.to_vec())?;
        Ok(self.spec.forward_batch(&self.weights, &self.bias, &x)?.data)
    }

    pub fn backward(&self, input: &[T], grad_out: &[T]) -> Result<DenseGrads<T>> {
        let x = Act::new(1, 1, 1, input.len(), input.to_vec())?;
        let g = Act::new(1, 1, 1, grad_out.len(), grad_out.to_vec())?;
        let mut weights = vec![T::zero(); self.weights.len()];
        let mut bias = vec![T::zero(); self.bias.len()];
        let gi = self
            .spec
            .backward_batch(&self.weights, &x, &g, &mut weights, &mut bias, true)?
            .expect("input gradient requested");
        Ok(DenseGrads {
            input: gi.data,
            weights,
            bias,
        })
    }
}
