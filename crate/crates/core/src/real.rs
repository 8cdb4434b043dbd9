use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the numeric core is written against: `f32` or `f64`.
///
/// Tolerances throughout the crate are stated for `f64`. `TOL_SCALE` widens
/// them for lower-precision types so the same code paths remain usable.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    const TOL_SCALE: f64;

    /// Converts an `f64` constant into `Self`.
    #[inline]
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable")
    }

    /// An `f64`-calibrated tolerance, widened for this scalar's precision.
    #[inline]
    fn tol(x: f64) -> Self {
        Self::c(x * Self::TOL_SCALE)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    const TOL_SCALE: f64 = 1.0;
}

impl Real for f32 {
    const TOL_SCALE: f64 = 1e5;
}
