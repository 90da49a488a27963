//! Numeric scalar abstraction shared by the signal-processing core.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Floating point type the core algorithms are written against: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + FftNum
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + FftNum
        + Sum
        + Default
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

/// Normalized cardinal sine, `sin(pi x) / (pi x)`.
pub fn sinc<T: Scalar>(x: T) -> T {
    if x.abs() < T::lit(1e-12) {
        T::one()
    } else {
        let px = T::PI() * x;
        px.sin() / px
    }
}

/// Unit triangle `max(0, 1 - |x|)`.
pub fn triangle<T: Scalar>(x: T) -> T {
    (T::one() - x.abs()).max(T::zero())
}

/// Rounds a non-negative scalar to the nearest sample index.
pub(crate) fn round_index<T: Scalar>(x: T) -> i64 {
    x.round().to_i64().unwrap_or(i64::MAX)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinc_zero_and_integer_roots() {
        assert_eq!(sinc(0.0f64), 1.0);
        for k in 1..5 {
            assert!(sinc(k as f64).abs() < 1e-15);
        }
        assert!((sinc(0.5f32) - 2.0 / std::f32::consts::PI).abs() < 1e-6);
    }

    #[test]
    fn triangle_support() {
        assert_eq!(triangle(0.0f64), 1.0);
        assert_eq!(triangle(0.25f64), 0.75);
        assert_eq!(triangle(-1.0f64), 0.0);
        assert_eq!(triangle(3.0f64), 0.0);
    }
}
