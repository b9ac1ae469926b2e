//! Base-2 Kullback-Leibler and Jensen-Shannon divergences.

use crate::error::{Error, Result};
use crate::partition::CategoryDistribution;
use crate::scalar::Scalar;

/// `p · log2(p / m)`, zero when `p` is zero.
fn kl_term<T: Scalar>(p: T, m: T) -> T {
    if p > T::zero() {
        p * (p / m).log2()
    } else {
        T::zero()
    }
}

/// KL(P ‖ Q) in bits. Infinite when Q is zero somewhere P is not.
pub fn kl_divergence<T: Scalar>(p: &[T], q: &[T]) -> Result<T> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    Ok(p.iter().zip(q).map(|(&a, &b)| kl_term(a, b)).sum())
}

/// Jensen-Shannon divergence in bits, in `[0, 1]`. Exactly symmetric in its
/// arguments, and exactly 1 when the supports are disjoint.
pub fn js_divergence_slices<T: Scalar>(p: &[T], q: &[T]) -> Result<T> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    // Summed log terms land a few ulps below 1 here.
    if p.iter().zip(q).all(|(&a, &b)| a <= T::zero() || b <= T::zero()) && p.iter().any(|&a| a > T::zero()) {
        return Ok(T::one());
    }
    let half = T::lit(0.5);
    let total: T = p
        .iter()
        .zip(q)
        .map(|(&a, &b)| {
            let m = (a + b) * half;
            // `+` commutes bitwise, so swapping P and Q yields the same value.
            half * (kl_term(a, m) + kl_term(b, m))
        })
        .sum();
    Ok(total.max(T::zero()).min(T::one()))
}

pub fn js_divergence<T: Scalar>(p: &CategoryDistribution<T>, q: &CategoryDistribution<T>) -> Result<T> {
    js_divergence_slices(p.probs(), q.probs())
}
