//! Floating-point scalar abstraction.
//!
//! All numeric kernels in this crate (split search, leaf weights, metrics,
//! partial dependence averaging) are generic over [`Scalar`] so the same code
//! runs in `f32` or `f64`. The crate root exposes `f64` aliases, which is
//! what the CLI and the on-disk formats use.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point element type for datasets, trees and models.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Convert from `f64`, rounding to the nearest representable value.
    fn from_f64_lossy(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 converts to any Scalar")
    }

    /// Convert to `f64`, widening losslessly for `f32`/`f64`.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    /// Count as a scalar, for means and variances.
    fn from_count(n: usize) -> Self {
        Self::from_f64_lossy(n as f64)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Mean of a slice. Returns zero on empty input.
pub fn mean<S: Scalar>(values: &[S]) -> S {
    if values.is_empty() {
        return S::zero();
    }
    values.iter().copied().sum::<S>() / S::from_count(values.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_of_empty_is_zero() {
        assert_eq!(mean::<f64>(&[]), 0.0);
    }

    #[test]
    fn mean_matches_hand_value() {
        assert_eq!(mean(&[1.0_f64, 2.0, 3.0]), 2.0);
        assert!((mean(&[1.0_f32, 2.0]) - 1.5).abs() < 1e-6);
    }

    #[test]
    fn count_conversion_round_trips() {
        assert_eq!(f64::from_count(41), 41.0);
        assert_eq!(f32::from_count(7), 7.0);
    }
}
