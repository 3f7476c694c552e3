use super::Scalar;

pub fn relu<T: Scalar>(input: &[T]) -> Vec<T> {
    input.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect()
}

/// Passes the gradient where the input was strictly positive; the
/// derivative at zero is taken as zero.
pub fn relu_backward<T: Scalar>(input: &[T], grad_out: &[T]) -> Vec<T> {
    debug_assert_eq!(input.len(), grad_out.len());
    input
        .iter()
        .zip(grad_out)
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect()
}

/// Numerically stable softmax (the maximum logit is subtracted first).
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Row-wise softmax over a `rows × width` buffer.
pub fn softmax_rows<T: Scalar>(logits: &[T], width: usize) -> Vec<T> {
    logits.chunks_exact(width).flat_map(softmax).collect()
}
