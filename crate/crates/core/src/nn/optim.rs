use serde::{Deserialize, Serialize};

use super::Scalar;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected adaptive-moment optimizer over a flat parameter buffer.
/// Moments that decay below [`Scalar::NEGLIGIBLE`] are flushed to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    first: Vec<T>,
    second: Vec<T>,
    step: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        Adam {
            config,
            first: vec![T::zero(); n_params],
            second: vec![T::zero(); n_params],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::DimensionMismatch(format!(
                "optimizer holds {} moments, got {} parameters and {} gradients",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let t = self.step as i32;
        // Fold both bias corrections into the step size.
        let correction1 = 1.0 - c.beta1.powi(t);
        let correction2 = 1.0 - c.beta2.powi(t);
        let lr = T::of(c.learning_rate / correction1);
        let sqrt_c2 = T::of(correction2.sqrt());
        let eps = T::of(c.epsilon);
        let (tiny_m, tiny_v) = (T::of(T::NEGLIGIBLE), T::of(T::NEGLIGIBLE * T::NEGLIGIBLE));
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            *m = (b1 * *m + one_b1 * g).flush_below(tiny_m);
            *v = (b2 * *v + one_b2 * g * g).flush_below(tiny_v);
            *p = *p - lr * *m / ((*v).sqrt() / sqrt_c2 + eps);
        }
        Ok(())
    }
}

/// Plain gradient descent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sgd {
    pub learning_rate: f64,
}

impl Sgd {
    pub fn step<T: Scalar>(&self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::DimensionMismatch("parameter and gradient lengths differ".into()));
        }
        let lr = T::of(self.learning_rate);
        for (p, &g) in params.iter_mut().zip(grads) {
            *p = *p - lr * g;
        }
        Ok(())
    }
}
