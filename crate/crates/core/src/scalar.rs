//! Scalar abstraction for the numeric core.
//!
//! Model math, losses and the optimizer are generic over [`Scalar`] so the
//! same code runs in f64 (training, gradient checks) and f32 (generation).
//! Checkpoints are always written as 64-bit floats; `f32 -> f64` widening is
//! exact, so a model saved from an f32 instance round-trips losslessly.

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, NumAssign};
use std::fmt::{Debug, Display};
use std::iter::Sum;

pub trait Scalar:
    Float
    + NumAssign
    + ScalarOperand
    + LinalgScalar
    + Sum
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

/// Shorthand for converting an f64 constant into the working scalar type.
#[inline]
pub fn c<T: Scalar>(x: f64) -> T {
    T::from_f64(x)
}
