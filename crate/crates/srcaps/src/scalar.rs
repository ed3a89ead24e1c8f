//! Scalar abstraction so the numeric core works in both f32 and f64.

use std::fmt;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Element type of all tensors and parameters.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + fmt::Debug + fmt::Display + Default + Send + Sync + 'static
{
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}
