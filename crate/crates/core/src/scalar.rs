//! Floating point scalar abstraction shared by the geometry, formation and DMD code.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Gathers the traits the numerical core needs from a floating point type.
///
/// Implemented for `f32` and `f64`. The finite-difference steps are per type:
/// the `f64` values are the ones the tests pin, the `f32` values are widened
/// so truncation and roundoff stay balanced at centimetre scale.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + NumAssign + Debug + Display + Default + Send + Sync + 'static
{
    /// Central-difference step (cm) for derivatives of a custom potential.
    const FIELD_FD_STEP: f64;
    /// Central-difference step (cm) for the Christoffel oracle.
    const ORACLE_FD_STEP: f64;

    /// Converts an `f64` literal. Every `f64` is representable (possibly rounded).
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal converts to scalar")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    const FIELD_FD_STEP: f64 = 1e-4;
    const ORACLE_FD_STEP: f64 = 1e-5;
}

impl Scalar for f32 {
    const FIELD_FD_STEP: f64 = 2e-2;
    const ORACLE_FD_STEP: f64 = 1e-2;
}
