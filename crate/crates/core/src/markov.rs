//! The tridiagonal transition operator of a balanced environment, its adjoint, and the
//! π-weighted quadratic forms.
//!
//! `(Pu)(k) = ω_k u(k−1) + (1 − 2ω_k) u(k) + ω_k u(k+1)` acts on functions (columns of `P`),
//! `(P*u)(j) = ω_{j−1} u(j−1) + (1 − 2ω_j) u(j) + ω_{j+1} u(j+1)` moves distributions.
//! Every application grows the support by one site on each side.

use crate::environment::Environment;
use crate::error::Result;
use crate::lattice::{gradient, inner, laplacian, LatticeFunction};
use crate::scalar::{sum_terms, Scalar};

/// Which one-step update a kernel applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Update {
    /// `P u`, written as a three-term weighted sum.
    Forward,
    /// `P* u`.
    Adjoint,
    /// `u + ω Δu`, algebraically equal to `P u`.
    Heat,
}

/// Applies one update to `u` (on `lo..=lo+len−1`), writing the result on `lo−1..=hi+1` to `out`.
///
/// `padded` is scratch space; `omegas` must cover `lo−1..=hi+1`.
pub(crate) fn step_into<T: Scalar>(
    update: Update,
    omegas: &[T],
    u: &[T],
    padded: &mut Vec<T>,
    out: &mut Vec<T>,
) {
    let n = u.len();
    debug_assert_eq!(omegas.len(), n + 2);
    let zero = T::zero();
    let one = T::one();
    let two = T::lit(2.0);
    out.clear();
    out.resize(n + 2, zero);
    padded.clear();
    padded.resize(n + 4, zero);
    match update {
        Update::Forward => {
            padded[2..n + 2].copy_from_slice(u);
            for i in 0..n + 2 {
                let w = omegas[i];
                out[i] = w * padded[i] + (one - two * w) * padded[i + 1] + w * padded[i + 2];
            }
        }
        Update::Heat => {
            padded[2..n + 2].copy_from_slice(u);
            for i in 0..n + 2 {
                let (l, c, r) = (padded[i], padded[i + 1], padded[i + 2]);
                out[i] = c + omegas[i] * ((r - c) - (c - l));
            }
        }
        Update::Adjoint => {
            // padded holds ω_j u(j); the holding term uses u directly.
            for j in 0..n {
                padded[j + 2] = omegas[j + 1] * u[j];
            }
            for i in 0..n + 2 {
                let hold = if (1..=n).contains(&i) {
                    (one - two * omegas[i]) * u[i - 1]
                } else {
                    zero
                };
                out[i] = padded[i] + hold + padded[i + 2];
            }
        }
    }
}

fn apply<T: Scalar>(
    update: Update,
    env: &Environment<T>,
    u: &LatticeFunction<T>,
) -> Result<LatticeFunction<T>> {
    let lo = u.lo() - 1;
    let hi = u.hi() + 1;
    let omegas = env.omega_slice(lo, hi)?;
    let mut padded = Vec::new();
    let mut out = Vec::new();
    step_into(update, omegas, u.values(), &mut padded, &mut out);
    Ok(LatticeFunction::from_parts(lo, out))
}

/// `P u`. Requires the environment to cover `u`'s window extended by one site.
pub fn apply_p<T: Scalar>(env: &Environment<T>, u: &LatticeFunction<T>) -> Result<LatticeFunction<T>> {
    apply(Update::Forward, env, u)
}

/// `P* u`, the one-step evolution of a distribution. Preserves `Σ_j u(j)`.
pub fn apply_p_adjoint<T: Scalar>(
    env: &Environment<T>,
    u: &LatticeFunction<T>,
) -> Result<LatticeFunction<T>> {
    apply(Update::Adjoint, env, u)
}

/// `u + ω Δu`: the explicit heat step with diffusivity `ω`.
pub fn heat_step<T: Scalar>(
    env: &Environment<T>,
    u: &LatticeFunction<T>,
) -> Result<LatticeFunction<T>> {
    apply(Update::Heat, env, u)
}

/// `⟨u, v⟩_π = Σ_k u(k) v(k) / ω_k` over the common window.
pub fn inner_pi<T: Scalar>(
    env: &Environment<T>,
    u: &LatticeFunction<T>,
    v: &LatticeFunction<T>,
) -> Result<T> {
    let lo = u.lo().max(v.lo());
    let hi = u.hi().min(v.hi());
    if hi < lo {
        return Ok(T::zero());
    }
    let omegas = env.omega_slice(lo, hi)?;
    let us = &u.values()[(lo - u.lo()) as usize..=(hi - u.lo()) as usize];
    let vs = &v.values()[(lo - v.lo()) as usize..=(hi - v.lo()) as usize];
    Ok(sum_terms(
        us.iter().zip(vs).zip(omegas).map(|((&a, &b), &w)| a * b / w),
    ))
}

pub fn l1_pi_norm<T: Scalar>(env: &Environment<T>, u: &LatticeFunction<T>) -> Result<T> {
    let omegas = env.omega_slice(u.lo(), u.hi())?;
    Ok(sum_terms(u.values().iter().zip(omegas).map(|(&a, &w)| a.abs() / w)))
}

pub fn l2_pi_norm<T: Scalar>(env: &Environment<T>, u: &LatticeFunction<T>) -> Result<T> {
    Ok(inner_pi(env, u, u)?.sqrt())
}

/// `sup_k |u(k)|`; the weight plays no role pointwise. Still checks the window.
pub fn linf_pi_norm<T: Scalar>(env: &Environment<T>, u: &LatticeFunction<T>) -> Result<T> {
    env.require(u.lo(), u.hi())?;
    Ok(crate::lattice::linf_norm(u))
}

/// Discrete-time Dirichlet form `ℰ₂(u, v) = ⟨u, (I − P²) v⟩_π`.
pub fn dirichlet_e2<T: Scalar>(
    env: &Environment<T>,
    u: &LatticeFunction<T>,
    v: &LatticeFunction<T>,
) -> Result<T> {
    let p2v = apply_p(env, &apply_p(env, v)?)?;
    inner_pi(env, u, &v.sub(&p2v))
}

/// `2‖∇u‖² − Σ_k ω_k (Δu(k))²`, the ω-explicit form of `ℰ₂(u, u)`.
pub fn dirichlet_e2_explicit<T: Scalar>(env: &Environment<T>, u: &LatticeFunction<T>) -> Result<T> {
    let g = gradient(u);
    let d = laplacian(u);
    let omegas = env.omega_slice(d.lo(), d.hi())?;
    let weighted = sum_terms(d.values().iter().zip(omegas).map(|(&x, &w)| w * x * x));
    Ok(T::lit(2.0) * inner(&g, &g) - weighted)
}
