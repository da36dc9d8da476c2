use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point type the expression machinery is generic over.
///
/// Everything numeric in the crate (evaluation, fitting, data generation)
/// goes through this trait, so `f32` and `f64` both work. The pipeline
/// defaults to `f64` through the aliases at the crate root.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; values outside the range saturate to infinity.
    fn of(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Returns the value as an integer if it is one (within exact float equality).
    fn as_integer(self) -> Option<i64> {
        if self.is_finite() && self.fract() == Self::zero() && self.abs() < Self::of(1e15) {
            self.to_i64()
        } else {
            None
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Total order on scalars, NaN sorted last.
pub(crate) fn total_cmp<T: Scalar>(a: T, b: T) -> std::cmp::Ordering {
    a.as_f64().total_cmp(&b.as_f64())
}
