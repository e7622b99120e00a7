//! Scalar abstraction shared by every model in the crate.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Floating-point scalar usable throughout the simulation: `f32` or `f64`.
///
/// Everything numeric (waveforms, transfer functions, spectra, cavity models)
/// is generic over this trait. `f64` is the reference precision; the
/// tolerances quoted in the docs assume it.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + FftNum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
