use super::Scalar;
use crate::patching::{ClassWeights, Label};

/// Added to the true-class probability before taking the log.
pub const LOG_FLOOR: f64 = 1e-12;

/// Weighted cross-entropy of one softmax output.
///
/// Returns `−w_label · ln(p_label + 1e-12)` and the gradient with respect to
/// the logits taken jointly through the softmax, `w_label · (p − onehot)`.
pub fn weighted_cross_entropy<T: Scalar>(probs: &[T], label: Label, weights: &ClassWeights) -> (T, Vec<T>) {
    let w = T::of(weights.for_label(label));
    let k = label.index();
    let loss = -w * (probs[k] + T::of(LOG_FLOOR)).ln();
    let grad = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| w * (p - if i == k { T::one() } else { T::zero() }))
        .collect();
    (loss, grad)
}

/// Mean weighted loss over a batch of two-class outputs and the matching
/// logit gradient (already divided by the batch size). Gradient entries
/// below [`Scalar::NEGLIGIBLE`] are set to zero.
pub fn weighted_cross_entropy_batch<T: Scalar>(probs: &[T], labels: &[Label], weights: &ClassWeights) -> (T, Vec<T>) {
    debug_assert_eq!(probs.len(), 2 * labels.len());
    let scale = T::one() / T::of(labels.len() as f64);
    let tiny = T::of(T::NEGLIGIBLE);
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(probs.len());
    for (p, &label) in probs.chunks_exact(2).zip(labels) {
        let (l, g) = weighted_cross_entropy(p, label, weights);
        total = total + l;
        grad.extend(g.into_iter().map(|v| (v * scale).flush_below(tiny)));
    }
    (total * scale, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::softmax;
    use crate::patching::class_weights;

    #[test]
    fn certain_prediction_has_zero_loss() {
        let w = class_weights(1, 9).unwrap();
        let (l, _) = weighted_cross_entropy(&[0.0f64, 1.0], Label::Change, &w);
        assert!(l.abs() < 1e-10);
    }

    #[test]
    fn saturated_batch_gradients_are_exactly_zero() {
        let (_, g) = weighted_cross_entropy_batch(&[1e-20f32, 1.0, 0.5, 0.5], &[Label::Change, Label::NoChange], &ClassWeights::UNIT);
        assert_eq!(&g[..2], &[0.0, 0.0]);
        assert!(g[2] != 0.0 && g[3] != 0.0);
    }

    #[test]
    fn uniform_prediction_costs_ln2() {
        let (l, _) = weighted_cross_entropy(&[0.5f64, 0.5], Label::NoChange, &ClassWeights::UNIT);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-11);
    }

    #[test]
    fn unit_weights_equal_plain_cross_entropy() {
        let p = softmax(&[0.2f64, -0.7]);
        let (l, _) = weighted_cross_entropy(&p, Label::Change, &ClassWeights::UNIT);
        assert_eq!(l, -(p[1] + LOG_FLOOR).ln());
    }

    #[test]
    fn logit_gradient_matches_differences_through_softmax() {
        let w = ClassWeights { change: 3.5, no_change: 0.6 };
        let h = 1e-5;
        for label in [Label::Change, Label::NoChange] {
            for logits in [[0.3f64, -1.1], [2.0, 2.5], [-4.0, 3.0]] {
                let (_, g) = weighted_cross_entropy(&softmax(&logits), label, &w);
                for i in 0..2 {
                    let (mut p, mut m) = (logits, logits);
                    p[i] += h;
                    m[i] -= h;
                    let lp = weighted_cross_entropy(&softmax(&p), label, &w).0;
                    let lm = weighted_cross_entropy(&softmax(&m), label, &w).0;
                    let num = (lp - lm) / (2.0 * h);
                    assert!((num - g[i]).abs() / num.abs().max(g[i].abs()).max(1e-6) < 1e-4);
                }
            }
        }
    }

    #[test]
    fn batch_loss_is_the_mean() {
        let probs = [0.5f64, 0.5, 0.9, 0.1];
        let (l, g) = weighted_cross_entropy_batch(&probs, &[Label::NoChange, Label::Change], &ClassWeights::UNIT);
        let expected = (-(0.5f64 + LOG_FLOOR).ln() - (0.1f64 + LOG_FLOOR).ln()) / 2.0;
        assert!((l - expected).abs() < 1e-12);
        for (a, b) in g.iter().zip([-0.25, 0.25, 0.45, -0.45]) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
