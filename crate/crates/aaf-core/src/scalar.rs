//! Scalar abstraction: the tensor core is generic over the floating-point
//! type, with `f64` as the default used by the detection harness.

use num_traits::{Float, FromPrimitive, NumAssign, NumCast};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar usable in tensors and on the gradient tape.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal (tolerances, hyperparameters) into `Self`.
    fn lit(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("scalar literal conversion")
    }

    /// Lossy view of the value as `f64`, for reporting and thresholds.
    fn as_f64(self) -> f64 {
        <f64 as NumCast>::from(self).expect("scalar to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
