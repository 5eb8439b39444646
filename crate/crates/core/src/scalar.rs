//! Scalar abstraction shared by every numeric module.
//!
//! All algorithms are written against [`Real`], which is any nalgebra
//! `RealField` that is `Copy` and convertible to `f64`. In practice that
//! means `f32` and `f64`; the crate root re-exports `f64` aliases.

use approx::AbsDiffEq;
use nalgebra::RealField;
use num_traits::ToPrimitive;

pub trait Real: RealField + Copy + ToPrimitive {
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(value: f64) -> Self {
        nalgebra::convert(value)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the concrete type.
    #[inline]
    fn eps() -> Self {
        <Self as AbsDiffEq>::default_epsilon()
    }
}

impl<T: RealField + Copy + ToPrimitive> Real for T {}
