//! Floating-point scalar abstraction.
//!
//! All numeric code in this crate is generic over [`Scalar`], which combines
//! the `nalgebra` real-field operations with `num-traits` conversions. The
//! crate root exports `f64` aliases for the main types; `f32` works through
//! the generic API.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar type usable throughout the crate: `f32` or `f64`.
pub trait Scalar: RealField + Copy + FromPrimitive + ToPrimitive {}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand for converting an `f64` constant into the working scalar type.
#[inline]
pub(crate) fn real<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant must convert into the scalar type")
}

/// Integer-to-scalar conversion for counts and indices.
#[inline]
pub(crate) fn real_usize<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("usize must convert into the scalar type")
}
