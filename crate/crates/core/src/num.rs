//! Scalar bound shared by the numeric parts of the crate (ROUGE scoring and
//! the toy seq2seq model). Both `f32` and `f64` satisfy it.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar used by score and model arithmetic.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Default + Send + Sync + 'static
{
    /// Lossy conversion from a count or ratio computed in `f64`.
    fn of(value: f64) -> Self {
        Self::from_f64(value).unwrap_or_else(Self::nan)
    }

    fn of_usize(value: usize) -> Self {
        Self::from_usize(value).unwrap_or_else(Self::nan)
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Sum + Debug + Default + Send + Sync + 'static
{
}

/// Harmonic mean of precision and recall; zero when both are zero.
pub fn f_measure<F: Scalar>(precision: F, recall: F) -> F {
    let denom = precision + recall;
    if denom <= F::zero() {
        F::zero()
    } else {
        F::of(2.0) * precision * recall / denom
    }
}
