//! Balanced environments: the site diffusivities `ω_k ∈ (0, 1/2]` on a finite window.
//!
//! A walk in the environment jumps left or right from site `k` with probability `ω_k`
//! each and holds with probability `1 − 2ω_k`. The measure `π_k = 1/ω_k` is reversible.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::RngCore;
use rand_chacha::ChaCha20Rng;
use rand::SeedableRng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hexfloat;
use crate::scalar::Scalar;

/// Name of the generator behind every stochastic output of this crate.
pub const GENERATOR_NAME: &str = "ChaCha20";

/// Inclusive range of lattice sites `lo..=hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Window {
    pub lo: i64,
    pub hi: i64,
}

impl Window {
    pub fn new(lo: i64, hi: i64) -> Result<Self> {
        if lo > hi {
            return Err(Error::Parameter(format!("empty window [{lo}, {hi}]")));
        }
        Ok(Window { lo, hi })
    }

    /// The window `[-r, r]`.
    pub fn symmetric(r: i64) -> Self {
        Window { lo: -r, hi: r }
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, k: i64) -> bool {
        self.lo <= k && k <= self.hi
    }
}

impl FromStr for Window {
    type Err = Error;

    /// Parses `lo,hi`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(',')
            .ok_or_else(|| Error::Parameter(format!("window `{s}` is not of the form lo,hi")))?;
        let lo = a.trim().parse::<i64>();
        let hi = b.trim().parse::<i64>();
        match (lo, hi) {
            (Ok(lo), Ok(hi)) => Window::new(lo, hi),
            _ => Err(Error::Parameter(format!("window `{s}` has non-integer bounds"))),
        }
    }
}

/// Law from which an environment is drawn or filled.
///
/// Text form (used in files and on the command line):
/// `constant:w`, `uniform:a,b`, `discrete:v1,v2,..;p1,p2,..`, `periodic:w0,w1,..`, `explicit`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum Law {
    /// `ω_k = w` for every site.
    Constant { omega: f64 },
    /// i.i.d. uniform on `(a, b]`.
    Uniform { a: f64, b: f64 },
    /// i.i.d. with `P(ω_k = values[i]) = probs[i]`.
    Discrete { values: Vec<f64>, probs: Vec<f64> },
    /// `ω_k = pattern[k mod L]`, with pattern index 0 at site 0.
    Periodic { pattern: Vec<f64> },
    /// Values supplied directly; not regenerable from a descriptor.
    Explicit,
}

impl Law {
    pub fn is_random(&self) -> bool {
        matches!(self, Law::Uniform { .. } | Law::Discrete { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let in_range = |w: f64| w > 0.0 && w <= 0.5;
        match self {
            Law::Constant { omega } => {
                if !in_range(*omega) {
                    return Err(Error::Domain(format!("constant ω = {omega} outside (0, 1/2]")));
                }
            }
            Law::Uniform { a, b } => {
                if !(0.0 < *a && a <= b && *b <= 0.5) {
                    return Err(Error::Parameter(format!(
                        "uniform bounds must satisfy 0 < a <= b <= 1/2, got a = {a}, b = {b}"
                    )));
                }
            }
            Law::Discrete { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return Err(Error::Parameter(
                        "discrete law needs equally many values and probabilities".into(),
                    ));
                }
                if let Some(w) = values.iter().find(|w| !in_range(**w)) {
                    return Err(Error::Domain(format!("discrete value {w} outside (0, 1/2]")));
                }
                if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                    return Err(Error::Parameter("discrete probabilities must be >= 0".into()));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::Parameter(format!(
                        "discrete probabilities sum to {total}, not 1"
                    )));
                }
            }
            Law::Periodic { pattern } => {
                if pattern.is_empty() {
                    return Err(Error::Parameter("periodic pattern is empty".into()));
                }
                if let Some(w) = pattern.iter().find(|w| !in_range(**w)) {
                    return Err(Error::Domain(format!("periodic value {w} outside (0, 1/2]")));
                }
            }
            Law::Explicit => {}
        }
        Ok(())
    }

    /// `E[1/ω]` under the law, when it has a closed form.
    pub fn mean_inverse_omega(&self) -> Option<f64> {
        match self {
            Law::Constant { omega } => Some(1.0 / omega),
            Law::Uniform { a, b } if a == b => Some(1.0 / a),
            Law::Uniform { a, b } => Some((b / a).ln() / (b - a)),
            Law::Discrete { values, probs } => {
                Some(values.iter().zip(probs).map(|(w, p)| p / w).sum())
            }
            Law::Periodic { pattern } => {
                Some(pattern.iter().map(|w| 1.0 / w).sum::<f64>() / pattern.len() as f64)
            }
            Law::Explicit => None,
        }
    }

    /// Value at site `k` given one uniform draw `u ∈ [0, 1)` for that site.
    fn value_at(&self, k: i64, u: f64) -> f64 {
        match self {
            Law::Constant { omega } => *omega,
            // b − (b − a)·u lies in (a, b] for u ∈ [0, 1).
            Law::Uniform { a, b } => b - (b - a) * u,
            Law::Discrete { values, probs } => {
                let mut acc = 0.0;
                for (w, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *w;
                    }
                }
                *values.last().expect("validated nonempty")
            }
            Law::Periodic { pattern } => {
                let len = pattern.len() as i64;
                pattern[k.rem_euclid(len) as usize]
            }
            Law::Explicit => unreachable!("explicit environments are not generated"),
        }
    }
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

impl fmt::Display for Law {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Law::Constant { omega } => write!(f, "constant:{omega:?}"),
            Law::Uniform { a, b } => write!(f, "uniform:{a:?},{b:?}"),
            Law::Discrete { values, probs } => {
                write!(f, "discrete:{};{}", join(values), join(probs))
            }
            Law::Periodic { pattern } => write!(f, "periodic:{}", join(pattern)),
            Law::Explicit => write!(f, "explicit"),
        }
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            parse_number(t).ok_or_else(|| Error::Parameter(format!("`{t}` is not a number")))
        })
        .collect()
}

/// Parses a decimal, a hex float, or a simple fraction such as `1/4`.
fn parse_number(t: &str) -> Option<f64> {
    if let Some((n, d)) = t.split_once('/') {
        let n = hexfloat::parse_float(n)?;
        let d = hexfloat::parse_float(d)?;
        return Some(n / d);
    }
    hexfloat::parse_float(t)
}

impl FromStr for Law {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "explicit" {
            return Ok(Law::Explicit);
        }
        let (tag, params) = s
            .split_once(':')
            .ok_or_else(|| Error::Parameter(format!("law `{s}` lacks a `kind:` prefix")))?;
        let law = match tag {
            "constant" => {
                let v = parse_list(params)?;
                if v.len() != 1 {
                    return Err(Error::Parameter("constant law takes one value".into()));
                }
                Law::Constant { omega: v[0] }
            }
            "uniform" => {
                let v = parse_list(params)?;
                if v.len() != 2 {
                    return Err(Error::Parameter("uniform law takes two bounds a,b".into()));
                }
                Law::Uniform { a: v[0], b: v[1] }
            }
            "discrete" => {
                let (vals, probs) = params.split_once(';').ok_or_else(|| {
                    Error::Parameter("discrete law is `discrete:values;probs`".into())
                })?;
                Law::Discrete {
                    values: parse_list(vals)?,
                    probs: parse_list(probs)?,
                }
            }
            "periodic" => Law::Periodic {
                pattern: parse_list(params)?,
            },
            other => return Err(Error::Parameter(format!("unknown law kind `{other}`"))),
        };
        law.validate()?;
        Ok(law)
    }
}

/// A balanced environment on a finite window. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment<T: Scalar = f64> {
    lo: i64,
    omegas: Vec<T>,
    law: Law,
    seed: Option<u64>,
}

/// Maps a site to a nonnegative counter so that every site owns a fixed slot of the keystream.
fn site_slot(k: i64) -> u64 {
    ((k << 1) ^ (k >> 63)) as u64
}

fn check_omega(k: i64, w: f64) -> Result<()> {
    if w > 0.0 && w <= 0.5 {
        Ok(())
    } else {
        Err(Error::Domain(format!("ω_{k} = {w} outside (0, 1/2]")))
    }
}

impl<T: Scalar> Environment<T> {
    /// Draws or fills an environment on `window`.
    ///
    /// Random laws need a seed. Site `k` consumes keystream slot `zigzag(k)` of a ChaCha20
    /// generator keyed by the seed, so overlapping windows agree on shared sites.
    pub fn generate(law: Law, window: Window, seed: Option<u64>) -> Result<Self> {
        law.validate()?;
        if matches!(law, Law::Explicit) {
            return Err(Error::Parameter("an explicit law cannot be generated".into()));
        }
        let seed = if law.is_random() {
            Some(seed.ok_or_else(|| Error::Parameter(format!("law `{law}` needs a seed")))?)
        } else {
            None
        };
        let mut rng = seed.map(ChaCha20Rng::seed_from_u64);
        let mut omegas = Vec::with_capacity(window.len());
        for k in window.lo..=window.hi {
            let u = match rng.as_mut() {
                Some(rng) => {
                    // Each next_u64 consumes two 32-bit words.
                    rng.set_word_pos(2 * site_slot(k) as u128);
                    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
                }
                None => 0.0,
            };
            let w = law.value_at(k, u);
            check_omega(k, w)?;
            let wt = T::lit(w);
            check_omega(k, wt.as_f64())?;
            omegas.push(wt);
        }
        Ok(Environment {
            lo: window.lo,
            omegas,
            law,
            seed,
        })
    }

    /// Wraps explicit values `ω_lo, ω_lo+1, ...`.
    pub fn from_omegas(lo: i64, omegas: Vec<T>) -> Result<Self> {
        Self::with_provenance(lo, omegas, Law::Explicit, None)
    }

    fn with_provenance(lo: i64, omegas: Vec<T>, law: Law, seed: Option<u64>) -> Result<Self> {
        if omegas.is_empty() {
            return Err(Error::Parameter("environment window is empty".into()));
        }
        for (i, w) in omegas.iter().enumerate() {
            check_omega(lo + i as i64, w.as_f64())?;
        }
        Ok(Environment {
            lo,
            omegas,
            law,
            seed,
        })
    }

    pub fn window(&self) -> Window {
        Window {
            lo: self.lo,
            hi: self.lo + self.omegas.len() as i64 - 1,
        }
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.window().hi
    }

    pub fn law(&self) -> &Law {
        &self.law
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn omegas(&self) -> &[T] {
        &self.omegas
    }

    /// Fails with a window error unless `[lo, hi]` lies inside the environment window.
    pub fn require(&self, lo: i64, hi: i64) -> Result<()> {
        let w = self.window();
        if lo < w.lo || hi > w.hi {
            return Err(Error::Window {
                need_lo: lo,
                need_hi: hi,
                have_lo: w.lo,
                have_hi: w.hi,
            });
        }
        Ok(())
    }

    /// `ω_k` for sites `lo..=hi`.
    pub fn omega_slice(&self, lo: i64, hi: i64) -> Result<&[T]> {
        self.require(lo, hi)?;
        let start = (lo - self.lo) as usize;
        let end = (hi - self.lo) as usize;
        Ok(&self.omegas[start..=end])
    }

    pub fn omega(&self, k: i64) -> Result<T> {
        self.require(k, k)?;
        Ok(self.omegas[(k - self.lo) as usize])
    }

    /// `(q_k, r_k, p_k) = (ω_k, 1 − 2ω_k, ω_k)`.
    pub fn transition_triplet(&self, k: i64) -> Result<(T, T, T)> {
        let w = self.omega(k)?;
        Ok((w, T::one() - (w + w), w))
    }

    /// Reversible weight `π_k = 1/ω_k`.
    pub fn pi_weight(&self, k: i64) -> Result<T> {
        Ok(self.omega(k)?.recip())
    }

    pub fn min_omega(&self) -> T {
        self.omegas.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_omega(&self) -> T {
        self.omegas.iter().copied().fold(T::zero(), T::max)
    }

    /// True when every `ω_k ≤ 1/4`, so the walk is lazy.
    pub fn is_lazy(&self) -> bool {
        self.max_omega() <= T::lit(0.25)
    }

    /// Exact value of `(1/(y−x)) ∫_x^y 1/ω_{⌊Tξ⌋} dξ`.
    ///
    /// The integrand is constant on the cells `[k/T, (k+1)/T)`, so the integral is a finite
    /// sum of overlap lengths weighted by `1/ω_k`.
    pub fn average_inverse_omega(&self, x: f64, y: f64, scale: f64) -> Result<f64> {
        if !(x < y) || !x.is_finite() || !y.is_finite() {
            return Err(Error::Parameter(format!("need x < y, got x = {x}, y = {y}")));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Parameter(format!("scale T must be positive, got {scale}")));
        }
        let s0 = scale * x;
        let s1 = scale * y;
        let k0 = s0.floor() as i64;
        let k1 = s1.floor() as i64;
        self.require(k0, k1)?;
        let mut total = 0.0;
        for k in k0..=k1 {
            let left = (k as f64).max(s0);
            let right = ((k + 1) as f64).min(s1);
            if right > left {
                total += (right - left) / self.omegas[(k - self.lo) as usize].as_f64();
            }
        }
        Ok(total / (s1 - s0))
    }

    /// The same environment viewed with every site moved by `offset`.
    pub fn translated(&self, offset: i64) -> Self {
        Environment {
            lo: self.lo + offset,
            omegas: self.omegas.clone(),
            law: Law::Explicit,
            seed: None,
        }
    }

    /// Hex digest identifying the window and values (not the provenance).
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.lo.to_le_bytes());
        hasher.update((self.omegas.len() as u64).to_le_bytes());
        for w in &self.omegas {
            hasher.update(w.as_f64().to_bits().to_le_bytes());
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Serializes to the line-oriented text format read by [`Environment::load`].
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(24 * self.omegas.len() + 64);
        out.push_str(&format!("law={}\n", self.law));
        if let Some(seed) = self.seed {
            out.push_str(&format!("seed={seed}\n"));
        }
        out.push_str(&format!("lo={}\n", self.lo));
        for w in &self.omegas {
            out.push_str(&hexfloat::format_hex(w.as_f64()));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(self.to_text().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text, path)
    }

    /// Parses the environment file format; `origin` is only used in error messages.
    pub fn parse_text(text: &str, origin: &Path) -> Result<Self> {
        let perr = |line: usize, field: &str, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            field: field.to_string(),
            message,
        };
        let mut law = None;
        let mut seed = None;
        let mut lo = None;
        let mut omegas = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((key, value)) = line.split_once('=') {
                if !omegas.is_empty() {
                    return Err(perr(line_no, key, "header line after values".into()));
                }
                match key.trim() {
                    "law" => {
                        law = Some(
                            value
                                .parse::<Law>()
                                .map_err(|e| perr(line_no, "law", e.to_string()))?,
                        )
                    }
                    "seed" => {
                        seed = Some(value.trim().parse::<u64>().map_err(|e| {
                            perr(line_no, "seed", format!("`{value}`: {e}"))
                        })?)
                    }
                    "lo" => {
                        lo = Some(value.trim().parse::<i64>().map_err(|e| {
                            perr(line_no, "lo", format!("`{value}`: {e}"))
                        })?)
                    }
                    other => return Err(perr(line_no, other, "unknown header key".into())),
                }
                continue;
            }
            let lo_v = lo.ok_or_else(|| perr(line_no, "lo", "values before `lo=` header".into()))?;
            let k = lo_v + omegas.len() as i64;
            let w = hexfloat::parse_float(line)
                .ok_or_else(|| perr(line_no, &format!("ω_{k}"), format!("`{line}` is not a number")))?;
            check_omega(k, w)?;
            let wt = T::lit(w);
            if wt.as_f64() != w {
                return Err(perr(
                    line_no,
                    &format!("ω_{k}"),
                    "value not representable in the scalar type".into(),
                ));
            }
            omegas.push(wt);
        }
        let lo = lo.ok_or_else(|| perr(0, "lo", "missing `lo=` header".into()))?;
        let law = law.ok_or_else(|| perr(0, "law", "missing `law=` header".into()))?;
        if omegas.is_empty() {
            return Err(perr(0, "omega", "no ω values".into()));
        }
        Self::with_provenance(lo, omegas, law, seed)
    }
}
