//! Floating-point scalar abstraction shared by every numeric routine.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar used for feature values, weights and probabilities.
///
/// Implemented for `f32` and `f64`. Tolerances quoted throughout the crate
/// (for example rows summing to one within `1e-9`) hold for `f64`; `f32`
/// computations satisfy the same contracts at single precision.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossless-for-literals conversion from `f64`.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    /// Machine epsilon scaled into a convergence floor for this precision.
    fn tiny() -> Self {
        Self::epsilon() * Self::of(16.0)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Numerically stable `ln(1 + exp(x))`.
pub fn log1p_exp<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic function `1 / (1 + exp(-x))` without overflow.
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Softmax of `logits` written into a fresh vector. The maximum logit is
/// subtracted first, so shifting every logit by a constant leaves the result
/// unchanged.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

pub fn softmax_in_place<T: Scalar>(values: &mut [T]) {
    let max = values
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    let mut total = T::zero();
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in values.iter_mut() {
        *v /= total;
    }
}

/// `ln(sum(exp(values)))`, stabilised by the maximum.
pub fn log_sum_exp<T: Scalar>(values: &[T]) -> T {
    let max = values
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    let total: T = values.iter().map(|&v| (v - max).exp()).sum();
    max + total.ln()
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_closed_form() {
        let p = softmax(&[2.0f64.ln(), 0.0]);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let p = softmax(&[0.0f64; 4]);
        assert!(p.iter().all(|&x| x == 0.25));
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let p = softmax(&[1000.0f32, 0.0]);
        assert_eq!(p[0], 1.0);
        assert!(p[1] >= 0.0);
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn log1p_exp_matches_naive_in_safe_range() {
        for &x in &[-5.0f64, -0.3, 0.0, 0.7, 6.0] {
            assert!((log1p_exp(x) - (1.0 + x.exp()).ln()).abs() < 1e-12);
        }
        assert!((log1p_exp(800.0f64) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn sigmoid_is_symmetric() {
        for &x in &[-30.0f64, -1.0, 0.0, 2.5] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
    }
}
