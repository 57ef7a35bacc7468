//! Scalar abstraction for similarity metrics and detection scores.
//!
//! Every metric, rule threshold and precision/recall figure is generic over
//! [`Scalar`], implemented for `f32` and `f64`. The crate root exposes `f64`
//! aliases for the common case.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Display
    + Debug
    + Default
    + Sum
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Exact conversion of a token or n-gram count.
    fn from_count(count: usize) -> Self {
        Self::from_usize(count).expect("count representable as float")
    }

    /// Conversion of an `f64` literal, rounding to the nearest representable value.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("finite literal")
    }

    /// Lossy widening used for reporting and JSON rendering.
    fn widen(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// True when `value` is a number in the closed unit interval.
pub fn in_unit_interval<T: Scalar>(value: T) -> bool {
    !value.is_nan() && value >= T::zero() && value <= T::one()
}
