//! Floating-point abstraction shared by the lattice kernels.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the kernels are generic over: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Converts an `f64` constant, rounding to the nearest representable value.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant is representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Sums a slice by pairwise (tree) reduction.
pub fn pairwise_sum<T: Scalar>(xs: &[T]) -> T {
    const LEAF: usize = 128;
    if xs.len() <= LEAF {
        return xs.iter().fold(T::zero(), |acc, &x| acc + x);
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Windows longer than this are summed pairwise instead of left-to-right.
pub const PAIRWISE_THRESHOLD: usize = 100_000;

/// Sums an exact-size sequence of terms, switching to pairwise reduction for long inputs.
pub(crate) fn sum_terms<T: Scalar, I>(terms: I) -> T
where
    I: ExactSizeIterator<Item = T>,
{
    if terms.len() > PAIRWISE_THRESHOLD {
        let buf: Vec<T> = terms.collect();
        pairwise_sum(&buf)
    } else {
        terms.fold(T::zero(), |acc, x| acc + x)
    }
}
