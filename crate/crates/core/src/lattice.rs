//! Finitely supported functions on `Z` and the ω-free discrete calculus on them.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::{sum_terms, Scalar};

/// A real function on a window `lo..=hi` of `Z`, zero outside the window.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeFunction<T: Scalar = f64> {
    lo: i64,
    values: Vec<T>,
}

impl<T: Scalar> LatticeFunction<T> {
    /// Fails if any value is NaN or infinite, or if `values` is empty.
    pub fn new(lo: i64, values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Parameter("lattice function needs a nonempty window".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite value {} at site {}",
                values[i],
                lo + i as i64
            )));
        }
        Ok(LatticeFunction { lo, values })
    }

    /// Internal constructor for results of finite arithmetic on finite inputs.
    pub(crate) fn from_parts(lo: i64, values: Vec<T>) -> Self {
        debug_assert!(!values.is_empty());
        LatticeFunction { lo, values }
    }

    /// The indicator `1_{k}`.
    pub fn delta(k: i64) -> Self {
        LatticeFunction {
            lo: k,
            values: vec![T::one()],
        }
    }

    /// The constant `c` on `lo..=hi`.
    pub fn constant(lo: i64, hi: i64, c: T) -> Result<Self> {
        if hi < lo {
            return Err(Error::Parameter(format!("empty window [{lo}, {hi}]")));
        }
        Self::new(lo, vec![c; (hi - lo + 1) as usize])
    }

    pub fn from_fn(lo: i64, hi: i64, f: impl Fn(i64) -> T) -> Result<Self> {
        if hi < lo {
            return Err(Error::Parameter(format!("empty window [{lo}, {hi}]")));
        }
        Self::new(lo, (lo..=hi).map(f).collect())
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.values.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// `u(k)`, zero outside the window.
    pub fn get(&self, k: i64) -> T {
        if k < self.lo {
            return T::zero();
        }
        self.values
            .get((k - self.lo) as usize)
            .copied()
            .unwrap_or_else(T::zero)
    }

    /// `(k, u(k))` over the window.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = (i64, T)> + '_ {
        let lo = self.lo;
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (lo + i as i64, v))
    }

    pub fn sum(&self) -> T {
        sum_terms(self.values.iter().copied())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        LatticeFunction::from_parts(self.lo, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    /// Pointwise `f(u(k), v(k))` over the union of the two windows.
    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        let lo = self.lo.min(other.lo);
        let hi = self.hi().max(other.hi());
        let values = (lo..=hi).map(|k| f(self.get(k), other.get(k))).collect();
        LatticeFunction::from_parts(lo, values)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    /// The same function moved right by `offset` sites.
    pub fn translated(&self, offset: i64) -> Self {
        LatticeFunction::from_parts(self.lo + offset, self.values.clone())
    }

    /// Drops edge values with magnitude below `threshold`, keeping at least one site.
    pub fn compact(&self, threshold: T) -> Self {
        let keep = |v: &T| v.abs() >= threshold;
        let Some(first) = self.values.iter().position(keep) else {
            return LatticeFunction::from_parts(self.lo, vec![self.values[0]]);
        };
        let last = self.values.iter().rposition(keep).expect("some value kept");
        LatticeFunction::from_parts(self.lo + first as i64, self.values[first..=last].to_vec())
    }

    /// `sup_k |u(k) − v(k)|`.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        let lo = self.lo.min(other.lo);
        let hi = self.hi().max(other.hi());
        (lo..=hi)
            .map(|k| (self.get(k) - other.get(k)).abs())
            .fold(T::zero(), T::max)
    }

    /// `k,value` rows with 17 significant digits, preceded by a `k,value` header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,value\n");
        for (k, v) in self.iter() {
            let _ = writeln!(out, "{k},{:.16e}", v.as_f64());
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// `∇u(k) = u(k+1) − u(k)`, supported on `lo−1..=hi`.
pub fn gradient<T: Scalar>(u: &LatticeFunction<T>) -> LatticeFunction<T> {
    let lo = u.lo() - 1;
    let values = (lo..=u.hi()).map(|k| u.get(k + 1) - u.get(k)).collect();
    LatticeFunction::from_parts(lo, values)
}

/// `Δu(k) = u(k+1) − 2u(k) + u(k−1)`, supported on `lo−1..=hi+1`.
pub fn laplacian<T: Scalar>(u: &LatticeFunction<T>) -> LatticeFunction<T> {
    let lo = u.lo() - 1;
    let hi = u.hi() + 1;
    // Evaluated as ∇u(k) − ∇u(k−1) so the identity holds bit-for-bit.
    let values = (lo..=hi)
        .map(|k| (u.get(k + 1) - u.get(k)) - (u.get(k) - u.get(k - 1)))
        .collect();
    LatticeFunction::from_parts(lo, values)
}

/// `⟨u, v⟩ = Σ_k u(k) v(k)`.
pub fn inner<T: Scalar>(u: &LatticeFunction<T>, v: &LatticeFunction<T>) -> T {
    let lo = u.lo().max(v.lo());
    let hi = u.hi().min(v.hi());
    if hi < lo {
        return T::zero();
    }
    let us = &u.values()[(lo - u.lo()) as usize..=(hi - u.lo()) as usize];
    let vs = &v.values()[(lo - v.lo()) as usize..=(hi - v.lo()) as usize];
    sum_terms(us.iter().zip(vs).map(|(&a, &b)| a * b))
}

pub fn l1_norm<T: Scalar>(u: &LatticeFunction<T>) -> T {
    sum_terms(u.values().iter().map(|v| v.abs()))
}

pub fn l2_norm<T: Scalar>(u: &LatticeFunction<T>) -> T {
    inner(u, u).sqrt()
}

pub fn linf_norm<T: Scalar>(u: &LatticeFunction<T>) -> T {
    u.values().iter().map(|v| v.abs()).fold(T::zero(), T::max)
}

/// `‖∇u‖²` for `u` given by its window values, without materializing the gradient.
pub fn gradient_norm_sq_of<T: Scalar>(values: &[T]) -> T {
    let (Some(&first), Some(&last)) = (values.first(), values.last()) else {
        return T::zero();
    };
    let interior = values
        .windows(2)
        .fold(T::zero(), |acc, w| acc + (w[1] - w[0]) * (w[1] - w[0]));
    first * first + interior + last * last
}

/// Continuous-time Dirichlet form `ℰ(u, v) = ⟨∇u, ∇v⟩`.
pub fn dirichlet_e<T: Scalar>(u: &LatticeFunction<T>, v: &LatticeFunction<T>) -> T {
    inner(&gradient(u), &gradient(v))
}
