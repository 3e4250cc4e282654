//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real floating-point scalar (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Panics only if the target cannot represent
    /// finite doubles, which never happens for `f32`/`f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal must convert")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize must convert")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("real must convert to f64")
    }

    /// Machine epsilon scaled for "numerically zero" tests.
    #[inline]
    fn tiny() -> Self {
        Self::epsilon() * Self::lit(64.0)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `x ∧ y` with NaN-free semantics for finite and infinite inputs.
#[inline]
pub fn min<T: Real>(x: T, y: T) -> T {
    if x <= y {
        x
    } else {
        y
    }
}

/// `x ∨ y`.
#[inline]
pub fn max<T: Real>(x: T, y: T) -> T {
    if x >= y {
        x
    } else {
        y
    }
}

/// Clamp to `[-a, a]`.
#[inline]
pub fn clamp_abs<T: Real>(x: T, a: T) -> T {
    if x > a {
        a
    } else if x < -a {
        -a
    } else {
        x
    }
}
