//! Generic scalar abstraction for the numeric core.
//!
//! Everything downstream (kernels, graphs, eigensolvers, experiments) is
//! written against [`Scalar`] so the same code runs in `f32` or `f64`.
//! Concrete aliases live at the crate root.

use num_traits::{FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable throughout the crate.
///
/// `nalgebra::RealField` supplies the elementary functions and linear-algebra
/// support; the `num-traits` bounds supply constants and lossless-enough
/// conversions from the `f64` literals used for tolerances and catalogued
/// reference values.
pub trait Scalar:
    nalgebra::RealField + FloatConst + FromPrimitive + ToPrimitive + Copy + Default + Send + Sync
{
    /// Shorthand for converting an `f64` constant into `Self`.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to scalar")
    }

    /// Lossy view as `f64` (exact for `f64`, widened for `f32`).
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    /// Machine epsilon of the concrete type, as `f64`.
    fn machine_epsilon() -> f64;
}

impl Scalar for f32 {
    fn machine_epsilon() -> f64 {
        f32::EPSILON as f64
    }
}

impl Scalar for f64 {
    fn machine_epsilon() -> f64 {
        f64::EPSILON
    }
}
