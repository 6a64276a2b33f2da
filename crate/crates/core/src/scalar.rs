//! Floating-point scalar abstraction for the numeric core.
//!
//! Everything that does tensor math (the tape, the builtin encoder, the
//! prediction heads) is generic over [`Scalar`] so the same code runs in
//! `f32` for training/inference and in `f64` for finite-difference
//! gradient checks.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::Float;
use serde::{de::DeserializeOwned, Serialize};

/// Scalar type the numeric core is generic over.
pub trait Scalar:
    Float
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    fn from_f64(x: f64) -> Self {
        <Self as num_traits::NumCast>::from(x).expect("f64 -> scalar conversion")
    }

    fn from_usize(x: usize) -> Self {
        <Self as num_traits::NumCast>::from(x).expect("usize -> scalar conversion")
    }

    fn to_f64(self) -> f64 {
        <f64 as num_traits::NumCast>::from(self).expect("scalar -> f64 conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_conversions() {
        assert_eq!(f32::from_f64(0.5).to_f64(), 0.5);
        assert_eq!(f64::from_usize(7), 7.0);
    }
}
