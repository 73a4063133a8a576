use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;

/// Floating point element type stored in tensors.
///
/// `f64` is the default everywhere; `f32` is available for throughput but is
/// not precise enough for finite-difference gradient checks.
pub trait Element: Float + Debug + Display + Default + Send + Sync + Sum + 'static {
    const NAME: &'static str;

    fn of(v: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Element for f64 {
    const NAME: &'static str = "f64";

    #[inline]
    fn of(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

impl Element for f32 {
    const NAME: &'static str = "f32";

    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}
