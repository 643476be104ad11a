//! Floating-point abstraction shared by the numeric parts of the crate.
//!
//! Feature vectors, classifier parameters and embedding tables are generic
//! over [`Scalar`], which is implemented for `f32` and `f64`. Metrics and
//! reported probabilities are always `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// f32 or f64
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
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
    /// Converts an `f64` literal or statistic into this scalar type.
    fn of(x: f64) -> Self;

    /// Converts a count into this scalar type.
    fn of_usize(n: usize) -> Self {
        Self::of(n as f64)
    }

    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Numerically stable softmax of `logits`, written in place.
pub(crate) fn softmax_in_place<T: Scalar>(logits: &mut [T]) {
    let max = logits
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    let mut total = T::zero();
    for z in logits.iter_mut() {
        *z = (*z - max).exp();
        total = total + *z;
    }
    for z in logits.iter_mut() {
        *z = *z / total;
    }
}

/// `ln(Σ exp(z))` without overflow.
pub(crate) fn log_sum_exp<T: Scalar>(logits: &[T]) -> T {
    let max = logits
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    let total: T = logits.iter().map(|&z| (z - max).exp()).sum();
    max + total.ln()
}
