use super::{Act, Scalar, Tensor};
use crate::{Error, Result};

/// Valid, stride-1 2-D cross-correlation.
///
/// The kernel is laid out `k × k × c_in × c_out` (row-major), so
/// `out(y, x, o) = bias(o) + Σ in(y+dy, x+dx, c) · kernel(dy, dx, c, o)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub k: usize,
    pub c_in: usize,
    pub c_out: usize,
}

impl ConvSpec {
    pub fn new(k: usize, c_in: usize, c_out: usize) -> Result<Self> {
        if k == 0 || k % 2 == 0 {
            return Err(Error::invalid(format!("kernel size must be odd, got {k}")));
        }
        if c_in == 0 || c_out == 0 {
            return Err(Error::invalid("convolution needs at least one input and output channel"));
        }
        Ok(ConvSpec { k, c_in, c_out })
    }

    pub fn kernel_len(&self) -> usize {
        self.k * self.k * self.c_in * self.c_out
    }

    pub fn fan_in(&self) -> usize {
        self.k * self.k * self.c_in
    }

    pub fn out_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if h < self.k || w < self.k {
            return Err(Error::DimensionMismatch(format!(
                "{h}x{w} input is smaller than the {k}x{k} kernel",
                k = self.k
            )));
        }
        Ok((h - self.k + 1, w - self.k + 1))
    }

    fn check_input<T: Scalar>(&self, x: &Act<T>) -> Result<(usize, usize)> {
        if x.c != self.c_in {
            return Err(Error::DimensionMismatch(format!(
                "convolution expects {} input channels, got {}",
                self.c_in, x.c
            )));
        }
        self.out_dims(x.h, x.w)
    }

    /// Unfolds every `k × k × c_in` window into one row.
    fn im2col<T: Scalar>(&self, x: &Act<T>, ho: usize, wo: usize) -> Vec<T> {
        let row_len = self.k * self.c_in;
        let kk = self.fan_in();
        let mut cols = vec![T::zero(); x.n * ho * wo * kk];
        let mut dst = 0;
        for n in 0..x.n {
            let base = n * x.h * x.w * x.c;
            for y in 0..ho {
                for xo in 0..wo {
                    for dy in 0..self.k {
                        let src = base + ((y + dy) * x.w + xo) * x.c;
                        cols[dst..dst + row_len].copy_from_slice(&x.data[src..src + row_len]);
                        dst += row_len;
                    }
                }
            }
        }
        cols
    }

    fn col2im<T: Scalar>(&self, cols: &[T], n: usize, h: usize, w: usize, ho: usize, wo: usize) -> Vec<T> {
        let row_len = self.k * self.c_in;
        let mut out = vec![T::zero(); n * h * w * self.c_in];
        let mut src = 0;
        for b in 0..n {
            let base = b * h * w * self.c_in;
            for y in 0..ho {
                for xo in 0..wo {
                    for dy in 0..self.k {
                        let dst = base + ((y + dy) * w + xo) * self.c_in;
                        for (o, &g) in out[dst..dst + row_len].iter_mut().zip(&cols[src..src + row_len]) {
                            *o = *o + g;
                        }
                        src += row_len;
                    }
                }
            }
        }
        out
    }

    pub fn forward_batch<T: Scalar>(&self, kernel: &[T], bias: &[T], x: &Act<T>) -> Result<Act<T>> {
        let (ho, wo) = self.check_input(x)?;
        if kernel.len() != self.kernel_len() || bias.len() != self.c_out {
            return Err(Error::DimensionMismatch("convolution parameter sizes".into()));
        }
        let m = x.n * ho * wo;
        let mut out = Vec::with_capacity(m * self.c_out);
        for _ in 0..m {
            out.extend_from_slice(bias);
        }
        if self.k == 1 {
            T::gemm(m, self.c_in, self.c_out, &x.data, false, kernel, false, &mut out, true);
        } else {
            let cols = self.im2col(x, ho, wo);
            T::gemm(m, self.fan_in(), self.c_out, &cols, false, kernel, false, &mut out, true);
        }
        Act::new(x.n, ho, wo, self.c_out, out)
    }

    /// Accumulates kernel and bias gradients; returns the input gradient if
    /// requested.
    pub fn backward_batch<T: Scalar>(
        &self,
        kernel: &[T],
        x: &Act<T>,
        grad_out: &Act<T>,
        grad_kernel: &mut [T],
        grad_bias: &mut [T],
        want_input: bool,
    ) -> Result<Option<Act<T>>> {
        let (ho, wo) = self.check_input(x)?;
        if (grad_out.n, grad_out.h, grad_out.w, grad_out.c) != (x.n, ho, wo, self.c_out) {
            return Err(Error::DimensionMismatch(format!(
                "output gradient is {}x{}x{}x{}, forward output is {}x{ho}x{wo}x{}",
                grad_out.n, grad_out.h, grad_out.w, grad_out.c, x.n, self.c_out
            )));
        }
        if grad_kernel.len() != self.kernel_len() || grad_bias.len() != self.c_out {
            return Err(Error::DimensionMismatch("convolution gradient buffer sizes".into()));
        }
        let m = x.n * ho * wo;
        let kk = self.fan_in();
        for row in grad_out.data.chunks_exact(self.c_out) {
            for (gb, &g) in grad_bias.iter_mut().zip(row) {
                *gb = *gb + g;
            }
        }
        let cols_owned;
        let cols: &[T] = if self.k == 1 {
            &x.data
        } else {
            cols_owned = self.im2col(x, ho, wo);
            &cols_owned
        };
        T::gemm(kk, m, self.c_out, cols, true, &grad_out.data, false, grad_kernel, true);
        if !want_input {
            return Ok(None);
        }
        let mut grad_cols = vec![T::zero(); m * kk];
        T::gemm(m, self.c_out, kk, &grad_out.data, false, kernel, true, &mut grad_cols, false);
        let grad_in = if self.k == 1 {
            grad_cols
        } else {
            self.col2im(&grad_cols, x.n, x.h, x.w, ho, wo)
        };
        Act::new(x.n, x.h, x.w, self.c_in, grad_in).map(Some)
    }
}

/// A convolution that owns its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub spec: ConvSpec,
    pub kernel: Vec<T>,
    pub bias: Vec<T>,
}

/// Gradients of a [`ConvLayer`] for one backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub kernel: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn new(spec: ConvSpec, kernel: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if kernel.len() != spec.kernel_len() || bias.len() != spec.c_out {
            return Err(Error::DimensionMismatch("convolution parameter sizes".into()));
        }
        Ok(ConvLayer { spec, kernel, bias })
    }

    /// `input` is `h × w × c_in`; the result is `(h−k+1) × (w−k+1) × c_out`.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let x = single(input)?;
        self.spec.forward_batch(&self.kernel, &self.bias, &x).map(|a| strip(&a))
    }

    pub fn backward(&self, input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<ConvGrads<T>> {
        let x = single(input)?;
        let g = single(grad_out)?;
        let mut kernel = vec![T::zero(); self.kernel.len()];
        let mut bias = vec![T::zero(); self.bias.len()];
        let gi = self
            .spec
            .backward_batch(&self.kernel, &x, &g, &mut kernel, &mut bias, true)?
            .expect("input gradient requested");
        Ok(ConvGrads {
            input: strip(&gi),
            kernel,
            bias,
        })
    }
}

fn single<T: Scalar>(t: &Tensor<T>) -> Result<Act<T>> {
    match *t.shape() {
        [h, w, c] => Act::new(1, h, w, c, t.data().to_vec()),
        ref other => Err(Error::DimensionMismatch(format!("expected an h×w×c tensor, got shape {other:?}"))),
    }
}

fn strip<T: Scalar>(a: &Act<T>) -> Tensor<T> {
    Tensor::new(vec![a.h, a.w, a.c], a.data.clone()).expect("consistent activation")
}
