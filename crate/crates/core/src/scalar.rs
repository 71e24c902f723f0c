//! Floating-point scalar abstraction shared by the numeric modules.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssignOps, ToPrimitive};

/// A real scalar the numeric core can run on: `f32` or `f64`.
///
/// Everything in [`crate::nn`], [`crate::rff`], [`crate::decorrelation`],
/// [`crate::saliency`], [`crate::agent`] and [`crate::metrics`] is written
/// against this trait.
pub trait Scalar:
    Float
    + FloatConst
    + NumAssignOps
    + FromPrimitive
    + ToPrimitive
    + ndarray::ScalarOperand
    + ndarray::LinalgScalar
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; panics only for types that cannot hold a float.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("scalar must be constructible from f64")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar must be convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
