//! Scalar abstraction for the numeric kernels.

use num_traits::{Float, NumAssignOps};
use std::fmt::{Debug, Display};

/// Floating-point scalar the tensor/autodiff/metric kernels are generic over.
///
/// Implemented for `f32` and `f64`. Conversions to and from `f64` are total
/// (an `f32` cast saturates, which never matters at the magnitudes used here).
pub trait Real: Float + NumAssignOps + Copy + Send + Sync + Debug + Display + 'static {
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn from_usize(x: usize) -> Self {
        Self::from_f64(x as f64)
    }
}

impl Real for f32 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}
