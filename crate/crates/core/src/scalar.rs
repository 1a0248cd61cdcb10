//! Floating-point scalar abstraction shared by the exact engines.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used throughout the exact engines: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Send + Sync + Debug + Display + 'static
{
    /// Converts an `f64` literal. Total for the supported types.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }

    /// `+1` or `-1` as a scalar.
    fn spin(s: i8) -> Self {
        if s > 0 {
            Self::one()
        } else {
            -Self::one()
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Sums `values` with a fixed binary-tree order.
///
/// The split points depend only on the slice length, so the result is
/// bit-identical whether or not the halves run on different threads.
pub fn pairwise_sum<T: Scalar>(values: &[T]) -> T {
    const LEAF: usize = 16;
    const PAR_CUTOFF: usize = 1 << 14;
    if values.len() <= LEAF {
        return values.iter().fold(T::zero(), |acc, &v| acc + v);
    }
    let (lo, hi) = values.split_at(values.len() / 2);
    if values.len() >= PAR_CUTOFF {
        let (a, b) = rayon::join(|| pairwise_sum(lo), || pairwise_sum(hi));
        a + b
    } else {
        pairwise_sum(lo) + pairwise_sum(hi)
    }
}
