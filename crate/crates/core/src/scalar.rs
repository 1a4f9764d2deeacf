//! Scalar abstraction for the numeric core.
//!
//! Everything in the tensor, layer, model and training stacks is generic over
//! [`Scalar`] so the same code runs at f32 or f64. The crate-root aliases pin
//! f64 as the default precision.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type usable by tensors, layers and optimizers.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from f64 (rounds for narrower types).
    fn from_f64_c(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to every Scalar")
    }

    /// Widening conversion to f64.
    fn to_f64_c(self) -> f64 {
        self.to_f64().expect("every Scalar widens to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// SeLU self-normalizing constant alpha.
pub fn selu_alpha<S: Scalar>() -> S {
    S::from_f64_c(1.673_263_242_354_377_2)
}

/// SeLU self-normalizing constant lambda (the output scale).
pub fn selu_scale<S: Scalar>() -> S {
    S::from_f64_c(1.050_700_987_355_480_5)
}
