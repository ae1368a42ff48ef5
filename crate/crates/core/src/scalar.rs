//! Scalar traits the solver is generic over.
//!
//! [`Field`] covers the exact algebra on generators (validation, the
//! quadratic-variation matrix and its seminorm) and is satisfied by exact
//! rationals as well as floats. [`Real`] adds what integration, simulation
//! and distortion need (`powf`, `ln`, parsing).

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::Neg;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

pub trait Field:
    Num + Neg<Output = Self> + Clone + PartialOrd + ToPrimitive + Debug + Send + Sync + 'static
{
}

impl<T> Field for T where
    T: Num + Neg<Output = T> + Clone + PartialOrd + ToPrimitive + Debug + Send + Sync + 'static
{
}

pub trait Real: Field + Float + FromPrimitive + Display + FromStr + Sum + Copy {}

impl<T> Real for T where T: Field + Float + FromPrimitive + Display + FromStr + Sum + Copy {}

/// Absolute value for any [`Field`].
pub fn abs<T: Field>(x: &T) -> T {
    if *x < T::zero() {
        -x.clone()
    } else {
        x.clone()
    }
}

/// Converts an `f64` literal into `T`.
///
/// Panics only if `T` cannot represent ordinary finite literals, which does not
/// happen for `f32`/`f64`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

#[inline]
pub(crate) fn to_f64<T: Field>(x: &T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
