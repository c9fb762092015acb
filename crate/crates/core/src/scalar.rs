//! Floating-point scalar abstraction: every geometric and numeric routine in
//! this crate is generic over [`Real`], instantiated with `f32` or `f64`.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Scalar type for geometry and optimization: `f32` or `f64`.
pub trait Real: RealField + FromPrimitive + ToPrimitive + Copy + Default + Send + Sync + 'static {
    /// Converts an `f64` constant into this scalar type.
    #[inline]
    fn of(value: f64) -> Self {
        <Self as FromPrimitive>::from_f64(value).expect("finite f64 constant")
    }

    /// Converts a `usize` count into this scalar type.
    #[inline]
    fn of_usize(value: usize) -> Self {
        <Self as FromPrimitive>::from_usize(value).expect("usize fits scalar")
    }

    /// Widens (or narrows) to `f64`, e.g. for serialization.
    #[inline]
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("scalar converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip<S: Real>() {
        let x = S::of(0.25);
        assert_eq!(x.as_f64(), 0.25);
        assert_eq!(S::of_usize(3).as_f64(), 3.0);
    }

    #[test]
    fn conversions_hold_for_both_widths() {
        roundtrip::<f32>();
        roundtrip::<f64>();
    }
}
