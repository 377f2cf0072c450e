//! Scalar abstraction for the numeric modules.
//!
//! The losses, the toy trainer, and k-means are generic over [`Real`] so the
//! same code runs at f32 or f64. Gradient checking is done at f64; the
//! concrete aliases at the crate root pick f64 as the default scalar.

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar usable in the loss and clustering code.
pub trait Real:
    Float + NumAssign + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Widening conversion for reporting and traces.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
