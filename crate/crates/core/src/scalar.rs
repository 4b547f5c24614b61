// SPDX-License-Identifier: MIT OR Apache-2.0

//! Scalar abstraction shared by the probe and statistics code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type the numerical core is generic over (`f32` or `f64`).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal; finite inputs always succeed for `f32`/`f64`.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    /// Floor for standard deviations treated as non-zero.
    fn tiny() -> Self;
}

impl Scalar for f32 {
    fn tiny() -> Self {
        1e-6
    }
}

impl Scalar for f64 {
    fn tiny() -> Self {
        1e-12
    }
}
