use nalgebra::RealField;
use num_traits::FromPrimitive;

/// Real scalar the geometry and metric routines are generic over.
///
/// Implemented for `f32` and `f64`. Tolerances quoted throughout the crate
/// assume `f64`.
pub trait Real: RealField + Copy + FromPrimitive {}

impl<T: RealField + Copy + FromPrimitive> Real for T {}

/// Lift an `f64` literal into `T`.
#[inline]
pub(crate) fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}
