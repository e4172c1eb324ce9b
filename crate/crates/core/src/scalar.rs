//! Scalar abstraction for the numeric core.
//!
//! Everything numerical in this crate is generic over [`Scalar`], which is
//! any IEEE float with the `num-traits` surface we need. The crate root
//! exposes `f64` aliases for the common case; `f32` works but the barrier
//! machinery is much better conditioned in 64-bit.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand for converting an `f64` literal into the working scalar type.
#[inline]
pub fn lit<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("literal representable in scalar type")
}

/// Lossy view of a scalar as `f64`, used at serialization boundaries.
#[inline]
pub fn to_f64<T: Scalar>(v: T) -> f64 {
    v.to_f64().expect("scalar representable as f64")
}
