use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type accepted by the numeric layers
/// (embedding cosine, correlation, z-normalization).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` constant; panics only for types that cannot
    /// represent small literals, which no implementor does.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("scalar literal")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("scalar count")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
