//! Stride bookkeeping for the row-major matrix products behind the layers.

pub(super) struct Strides {
    pub rsa: isize,
    pub csa: isize,
    pub rsb: isize,
    pub csb: isize,
    pub rsc: isize,
    pub csc: isize,
}

/// Strides for `c (m×n) = op(a) (m×k) · op(b) (k×n)`; panics if a buffer is
/// too small for its role.
#[allow(clippy::too_many_arguments)]
pub(super) fn strides(m: usize, k: usize, n: usize, a_len: usize, a_t: bool, b_len: usize, b_t: bool, c_len: usize) -> Strides {
    assert!(a_len >= m * k, "lhs has {a_len} values, needs {m}x{k}");
    assert!(b_len >= k * n, "rhs has {b_len} values, needs {k}x{n}");
    assert!(c_len >= m * n, "output has {c_len} values, needs {m}x{n}");
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    Strides {
        rsa,
        csa,
        rsb,
        csb,
        rsc: n as isize,
        csc: 1,
    }
}
