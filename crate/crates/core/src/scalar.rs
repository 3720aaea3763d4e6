//! Floating-point scalar abstraction the analytics are generic over.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Scalar type for all queueing math: `f32` or `f64`.
///
/// This trait gets implemented automatically for all types
/// that satisfy its dependent traits.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
}

impl<T> Scalar for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Sum
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

/// Converts an `f64` constant into the working scalar type.
pub(crate) fn num<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("f64 constant must be representable")
}

/// Converts a count into the working scalar type.
pub(crate) fn count<F: Scalar>(n: usize) -> F {
    F::from_usize(n).expect("count must be representable")
}

/// Converts back to `f64` for diagnostics and error payloads.
pub(crate) fn as_f64<F: Scalar>(x: F) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
