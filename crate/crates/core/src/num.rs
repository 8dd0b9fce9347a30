//! Scalar abstraction shared by every model in the crate.

use nalgebra as na;
use num_traits as nt;

pub type Vec2<T> = na::Vector2<T>;
pub type Vec3<T> = na::Vector3<T>;
pub type Quat<T> = na::UnitQuaternion<T>;

/// Floating point scalar the simulation is generic over (`f32` or `f64`).
pub trait Real:
    na::RealField
    + Copy
    + nt::FromPrimitive
    + nt::ToPrimitive
    + nt::FloatConst
    + Default
    + Send
    + Sync
    + std::fmt::Display
{
    const INFINITY: Self;
    const NEG_INFINITY: Self;

    /// Converts an `f64` literal into this scalar.
    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64;

    fn finite(self) -> bool;
}

macro_rules! impl_real {
    ($f:ty) => {
        impl Real for $f {
            const INFINITY: Self = <$f>::INFINITY;
            const NEG_INFINITY: Self = <$f>::NEG_INFINITY;

            #[inline]
            fn lit(x: f64) -> Self {
                x as $f
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            #[inline]
            fn finite(self) -> bool {
                self.is_finite()
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

/// True when `v` has unit norm within `tol`.
pub fn is_unit<T: Real>(v: &Vec3<T>, tol: f64) -> bool {
    (v.norm().as_f64() - 1.0).abs() <= tol
}

pub fn all_finite<T: Real>(v: &Vec3<T>) -> bool {
    v.iter().all(|c| c.finite())
}
