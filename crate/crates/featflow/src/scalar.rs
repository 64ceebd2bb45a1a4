//! Scalar abstraction for the solver core.
//!
//! Everything numeric in this crate is generic over [`Real`], which bundles
//! the `num-traits` float surface with the bounds `faer` needs for its dense
//! factorizations. `f32` and `f64` implement it; the crate root exports f64
//! aliases for the common types.

use std::fmt::{Debug, Display, LowerExp};

/// Floating-point scalar usable throughout the solver.
pub trait Real:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::NumAssign
    + faer::traits::RealField
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into this scalar type.
    fn of(value: f64) -> Self;

    /// Widens to `f64` for reporting and I/O.
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    #[inline(always)]
    fn of(value: f64) -> Self {
        value as f32
    }

    #[inline(always)]
    fn to_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    #[inline(always)]
    fn of(value: f64) -> Self {
        value
    }

    #[inline(always)]
    fn to_f64(self) -> f64 {
        self
    }
}
