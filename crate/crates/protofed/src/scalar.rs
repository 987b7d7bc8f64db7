//! Scalar abstraction for the numeric core.
//!
//! The matrix, kernel, loss, and metric code is generic over [`Real`], so the
//! same routines run in `f32` or `f64`. The simulator itself instantiates
//! everything at `f64` (see the aliases at the crate root); gradient checks at
//! 1e-4 relative tolerance need the extra precision.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar usable by the numeric core: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lift an `f64` constant into this scalar type.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("constant representable in scalar type")
    }
}

impl Real for f32 {}
impl Real for f64 {}
