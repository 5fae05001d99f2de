//! Exact kernels of the walk: the forward pmf `(P^n)_{0,·}`, the reversed kernel
//! `a(n,·) = (P^n)_{·,0}`, its two-step average `b(n,·)`, the Poissonized kernel `𝔞(t,·)`,
//! and Monte Carlo endpoints.
//!
//! Evolution is streamed through [`Evolution`], which keeps only the current time slice.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::environment::{Environment, GENERATOR_NAME};
use crate::error::{Error, Result};
use crate::lattice::{gradient_norm_sq_of, LatticeFunction};
use crate::markov::{step_into, Update};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `k ↦ (P^n)_{0,k}`, the law of `X_n`.
    Forward,
    /// `k ↦ a(n,k) = (P^n)_{k,0}`.
    ReversedA,
    /// `k ↦ b(n,k) = (a(n,k) + a(n+1,k))/2`.
    ReversedB,
    /// `k ↦ 𝔞(t,k) = (𝒫^t)_{k,0}`.
    Poissonized,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Forward => "forward",
            KernelKind::ReversedA => "reversed_a",
            KernelKind::ReversedB => "reversed_b",
            KernelKind::Poissonized => "poissonized",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelTime {
    Step(u64),
    Continuous(f64),
}

impl KernelTime {
    /// The time as a real number, for diffusive scaling.
    pub fn value(self) -> f64 {
        match self {
            KernelTime::Step(n) => n as f64,
            KernelTime::Continuous(t) => t,
        }
    }
}

/// Truncation of the Poisson mixture behind a Poissonized snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Truncation {
    /// Declared bound on the neglected Poisson tail mass.
    pub tol: f64,
    /// Highest discrete power included.
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSnapshot<T: Scalar = f64> {
    pub kind: KernelKind,
    pub time: KernelTime,
    pub f: LatticeFunction<T>,
    pub env_fingerprint: String,
    pub truncation: Option<Truncation>,
}

impl<T: Scalar> KernelSnapshot<T> {
    /// Discrete time index; `None` for Poissonized snapshots.
    pub fn step(&self) -> Option<u64> {
        match self.time {
            KernelTime::Step(n) => Some(n),
            KernelTime::Continuous(_) => None,
        }
    }

    /// Snapshot CSV: `#` header comments followed by `k,value` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# kind={}", self.kind.name());
        match self.time {
            KernelTime::Step(n) => {
                let _ = writeln!(out, "# n={n}");
            }
            KernelTime::Continuous(t) => {
                let _ = writeln!(out, "# t={t:.16e}");
            }
        }
        let _ = writeln!(out, "# env_fingerprint={}", self.env_fingerprint);
        if let Some(tr) = self.truncation {
            let _ = writeln!(out, "# truncation_tol={:.16e}", tr.tol);
            let _ = writeln!(out, "# truncation_order={}", tr.order);
        }
        out.push_str(&self.f.to_csv());
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Streaming evolution of one kernel from `1_{0}`.
///
/// Holds only the current slice, so memory stays `O(n)` at horizon `n`.
pub struct Evolution<'e, T: Scalar = f64> {
    env: &'e Environment<T>,
    update: Update,
    kind: KernelKind,
    n: u64,
    lo: i64,
    state: Vec<T>,
    padded: Vec<T>,
    next: Vec<T>,
}

impl<'e, T: Scalar> Evolution<'e, T> {
    fn new(env: &'e Environment<T>, update: Update, kind: KernelKind) -> Self {
        Evolution {
            env,
            update,
            kind,
            n: 0,
            lo: 0,
            state: vec![T::one()],
            padded: Vec::new(),
            next: Vec::new(),
        }
    }

    /// Law of `X_n`: repeated `P*`.
    pub fn forward(env: &'e Environment<T>) -> Self {
        Self::new(env, Update::Adjoint, KernelKind::Forward)
    }

    /// `a(n,·)` by repeated application of `P`.
    pub fn reversed(env: &'e Environment<T>) -> Self {
        Self::new(env, Update::Forward, KernelKind::ReversedA)
    }

    /// `a(n,·)` by the explicit heat update `a ← a + ω Δa`.
    pub fn heat(env: &'e Environment<T>) -> Self {
        Self::new(env, Update::Heat, KernelKind::ReversedA)
    }

    pub fn step(&mut self) -> Result<()> {
        let len = self.state.len() as i64;
        let omegas = self.env.omega_slice(self.lo - 1, self.lo + len)?;
        step_into(self.update, omegas, &self.state, &mut self.padded, &mut self.next);
        std::mem::swap(&mut self.state, &mut self.next);
        self.lo -= 1;
        self.n += 1;
        Ok(())
    }

    /// Steps until the time index equals `n`. Fails if `n` is already behind.
    pub fn advance_to(&mut self, n: u64) -> Result<()> {
        if n < self.n {
            return Err(Error::Usage(format!(
                "evolution is at n = {}, cannot rewind to {n}",
                self.n
            )));
        }
        while self.n < n {
            self.step()?;
        }
        Ok(())
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn values(&self) -> &[T] {
        &self.state
    }

    pub fn get(&self, k: i64) -> T {
        let i = k - self.lo;
        if i < 0 || i >= self.state.len() as i64 {
            T::zero()
        } else {
            self.state[i as usize]
        }
    }

    /// `‖∇f‖²` of the current slice.
    pub fn gradient_norm_sq(&self) -> T {
        gradient_norm_sq_of(&self.state)
    }

    pub fn current(&self) -> LatticeFunction<T> {
        LatticeFunction::from_parts(self.lo, self.state.clone())
    }

    pub fn snapshot(&self) -> KernelSnapshot<T> {
        KernelSnapshot {
            kind: self.kind,
            time: KernelTime::Step(self.n),
            f: self.current(),
            env_fingerprint: self.env.fingerprint(),
            truncation: None,
        }
    }
}

/// `k ↦ P(X_n = k | X_0 = 0)`.
pub fn forward_pmf<T: Scalar>(env: &Environment<T>, n: u64) -> Result<KernelSnapshot<T>> {
    let mut ev = Evolution::forward(env);
    ev.advance_to(n)?;
    Ok(ev.snapshot())
}

/// `a(n,·) = P^n 1_{0}`.
pub fn reversed_a<T: Scalar>(env: &Environment<T>, n: u64) -> Result<KernelSnapshot<T>> {
    let mut ev = Evolution::reversed(env);
    ev.advance_to(n)?;
    Ok(ev.snapshot())
}

/// `a(n,·)` from the heat recursion `a(m+1,k) = a(m,k) + ω_k Δa(m,k)`.
pub fn reversed_a_heatstep<T: Scalar>(env: &Environment<T>, n: u64) -> Result<KernelSnapshot<T>> {
    let mut ev = Evolution::heat(env);
    ev.advance_to(n)?;
    Ok(ev.snapshot())
}

/// Average of two consecutive slices `(f(n) + f(n+1))/2`, on the window of `f(n+1)`.
pub(crate) fn average_consecutive<T: Scalar>(prev: &LatticeFunction<T>, next: &LatticeFunction<T>) -> LatticeFunction<T> {
    let half = T::lit(0.5);
    prev.zip_with(next, |x, y| (x + y) * half)
}

/// `b(n,·) = (a(n,·) + a(n+1,·))/2`.
pub fn reversed_b<T: Scalar>(env: &Environment<T>, n: u64) -> Result<KernelSnapshot<T>> {
    let mut ev = Evolution::reversed(env);
    ev.advance_to(n)?;
    let an = ev.current();
    ev.step()?;
    Ok(KernelSnapshot {
        kind: KernelKind::ReversedB,
        time: KernelTime::Step(n),
        f: average_consecutive(&an, &ev.current()),
        env_fingerprint: env.fingerprint(),
        truncation: None,
    })
}

/// Poisson(`t`) weights `w_0..=w_N`, with `N` the smallest order whose neglected tail mass
/// is below `tol`.
///
/// The weights are seeded at the mode from `ln Γ` and filled by the ratio recursions in both
/// directions, so large `t` neither overflows nor underflows at the bulk. The tail is
/// summed from the far end, which keeps it accurate well below `1 − tol` resolution.
pub fn poisson_weights(t: f64, tol: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Parameter(format!("time t must be finite and >= 0, got {t}")));
    }
    if !(tol > 0.0 && tol <= 1e-6) {
        return Err(Error::Parameter(format!("tolerance must lie in (0, 1e-6], got {tol}")));
    }
    if t == 0.0 {
        return Ok(vec![1.0]);
    }
    let mode = t.floor() as usize;
    let log_mode = -t + mode as f64 * t.ln() - ln_gamma(mode as f64 + 1.0);
    let mut w = vec![0.0; mode + 1];
    w[mode] = log_mode.exp();
    for i in (1..=mode).rev() {
        w[i - 1] = w[i] * i as f64 / t;
    }
    // Continue past the mode until the remaining tail is negligible even relative to tol.
    let floor = tol * 1e-20;
    loop {
        let n = w.len() - 1;
        let next = w[n] * t / (n + 1) as f64;
        if next == 0.0 || (n as f64 > t && next < floor) {
            break;
        }
        w.push(next);
    }
    let mut tail = 0.0;
    let mut order = w.len() - 1;
    for n in (0..w.len()).rev() {
        // tail = Σ_{j > n} w_j
        if tail >= tol {
            break;
        }
        order = n;
        tail += w[n];
    }
    w.truncate(order + 1);
    Ok(w)
}

/// `𝔞(t,·) = e^{−t} Σ_{n≤N} t^n/n! a(n,·)`, truncated so the omitted mass is below `tol`.
pub fn poissonized<T: Scalar>(env: &Environment<T>, t: f64, tol: f64) -> Result<KernelSnapshot<T>> {
    let mut out = poissonized_many(env, &[t], tol)?;
    Ok(out.pop().expect("one time requested"))
}

/// Poissonized kernels at several times from a single pass over `a(n,·)`.
pub fn poissonized_many<T: Scalar>(
    env: &Environment<T>,
    times: &[f64],
    tol: f64,
) -> Result<Vec<KernelSnapshot<T>>> {
    let weights = times
        .iter()
        .map(|&t| poisson_weights(t, tol))
        .collect::<Result<Vec<_>>>()?;
    let horizon = weights.iter().map(|w| w.len() - 1).max().unwrap_or(0);
    env.require(-(horizon as i64), horizon as i64)?;
    let mut acc: Vec<Vec<T>> = weights
        .iter()
        .map(|w| vec![T::zero(); 2 * (w.len() - 1) + 1])
        .collect();
    let mut ev = Evolution::reversed(env);
    for n in 0..=horizon {
        if n > 0 {
            ev.step()?;
        }
        for (w, a) in weights.iter().zip(acc.iter_mut()) {
            let Some(&wn) = w.get(n) else { continue };
            if wn == 0.0 {
                continue;
            }
            let wn = T::lit(wn);
            let order = (w.len() - 1) as i64;
            let offset = (ev.lo() + order) as usize;
            for (slot, &v) in a[offset..offset + ev.values().len()].iter_mut().zip(ev.values()) {
                *slot = *slot + wn * v;
            }
        }
    }
    let fingerprint = env.fingerprint();
    Ok(times
        .iter()
        .zip(weights)
        .zip(acc)
        .map(|((&t, w), values)| {
            let order = w.len() - 1;
            KernelSnapshot {
                kind: KernelKind::Poissonized,
                time: KernelTime::Continuous(t),
                f: LatticeFunction::from_parts(-(order as i64), values),
                env_fingerprint: fingerprint.clone(),
                truncation: Some(Truncation { tol, order }),
            }
        })
        .collect())
}

/// Samples per independent generator stream in [`sample_endpoints`].
pub const SAMPLES_PER_STREAM: usize = 1024;

/// Simulates `count` independent copies of `X_n` started at 0.
///
/// Each step draws `U ∈ [0,1)` and moves left on `[0, ω_k)`, right on `[ω_k, 2ω_k)`, and
/// holds on `[2ω_k, 1)`. Samples are produced in blocks of [`SAMPLES_PER_STREAM`]; block `c`
/// uses ChaCha20 keyed by `seed` on stream `c`, so the output does not depend on the
/// number of worker threads.
pub fn sample_endpoints<T: Scalar>(
    env: &Environment<T>,
    n: u64,
    count: usize,
    seed: u64,
) -> Result<Vec<i64>> {
    if count == 0 {
        return Err(Error::Parameter("sample count must be >= 1".into()));
    }
    let reach = n as i64;
    let omegas: Vec<f64> = env
        .omega_slice(-reach, reach)?
        .iter()
        .map(|w| w.as_f64())
        .collect();
    let blocks = count.div_ceil(SAMPLES_PER_STREAM);
    let per_block: Vec<Vec<i64>> = (0..blocks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let size = SAMPLES_PER_STREAM.min(count - c * SAMPLES_PER_STREAM);
            (0..size)
                .map(|_| {
                    let mut x = 0i64;
                    for _ in 0..n {
                        let w = omegas[(x + reach) as usize];
                        let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                        if u < w {
                            x -= 1;
                        } else if u < 2.0 * w {
                            x += 1;
                        }
                    }
                    x
                })
                .collect()
        })
        .collect();
    Ok(per_block.concat())
}

/// Generator used by [`sample_endpoints`], for provenance records.
pub fn sampler_generator_name() -> &'static str {
    GENERATOR_NAME
}

/// Mean and variance `(Σ k p(k), Σ k² p(k) − mean²)` of a forward snapshot.
pub fn pmf_mean_variance<T: Scalar>(snapshot: &KernelSnapshot<T>) -> Result<(T, T)> {
    if snapshot.kind != KernelKind::Forward {
        return Err(Error::Usage(format!(
            "mean/variance needs a forward pmf, got {}",
            snapshot.kind.name()
        )));
    }
    let (mut m1, mut m2) = (T::zero(), T::zero());
    for (k, p) in snapshot.f.iter() {
        let kt = T::lit(k as f64);
        m1 = m1 + kt * p;
        m2 = m2 + kt * kt * p;
    }
    Ok((m1, m2 - m1 * m1))
}

/// Relative frequencies of sampled endpoints, on the window spanned by the samples.
pub fn empirical_pmf(samples: &[i64]) -> Result<LatticeFunction<f64>> {
    let (&lo, &hi) = match (samples.iter().min(), samples.iter().max()) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => return Err(Error::EmptySample("no samples".into())),
    };
    let mut counts = vec![0u64; (hi - lo + 1) as usize];
    for &x in samples {
        counts[(x - lo) as usize] += 1;
    }
    let total = samples.len() as f64;
    Ok(LatticeFunction::from_parts(
        lo,
        counts.into_iter().map(|c| c as f64 / total).collect(),
    ))
}

/// `½ Σ_k |p(k) − q(k)|` over the union of the windows.
pub fn total_variation(p: &LatticeFunction<f64>, q: &LatticeFunction<f64>) -> f64 {
    0.5 * p.sub(q).values().iter().map(|d| d.abs()).sum::<f64>()
}

/// `sup_x |F̂(x) − Φ(x/σ)|` between the empirical law of `X_n/√n` and `Normal(0, σ²)`.
///
/// The empirical distribution function jumps at each sampled value, so both one-sided
/// limits are compared there.
pub fn kolmogorov_normal(samples: &[i64], n: u64, sigma2: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySample("no samples".into()));
    }
    if !(sigma2 > 0.0) || n == 0 {
        return Err(Error::Parameter("need n >= 1 and σ² > 0".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let total = sorted.len() as f64;
    let scale = ((n as f64) * sigma2).sqrt();
    let cdf = |k: i64| 0.5 * erfc(-(k as f64) / (scale * std::f64::consts::SQRT_2));
    let mut worst = 0.0f64;
    let mut i = 0;
    while i < sorted.len() {
        let k = sorted[i];
        let below = i as f64 / total;
        while i < sorted.len() && sorted[i] == k {
            i += 1;
        }
        let upto = i as f64 / total;
        let f = cdf(k);
        worst = worst.max((f - below).abs()).max((f - upto).abs());
    }
    Ok(worst)
}
