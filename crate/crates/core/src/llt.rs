//! Diffusively scaled kernel profiles and their distance to the modulated Gaussian limit.
//!
//! At time `n` the site `k` covers the cell `x ∈ [k/√n, (k+1)/√n)`, on which every profile is
//! constant. Sup-errors are taken cell by cell against the exact range of the Gaussian on the
//! cell, so no sampling grid is involved.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolution::{
    pmf_mean_variance, poissonized_many, KernelKind, KernelTime,
};
use crate::svg::{LinePlot, Series};
use crate::{Environment, Evolution, KernelSnapshot, LatticeFunction};

/// Closed interval `[a, b]` of scaled positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Parameter(format!("interval needs a < b, got [{a}, {b}]")));
        }
        Ok(Interval { a, b })
    }

    /// Sites `⌊√n a⌋..=⌊√n b⌋` whose cells meet the interval at scale `√n = root`.
    pub fn sites(&self, root: f64) -> (i64, i64) {
        ((root * self.a).floor() as i64, (root * self.b).floor() as i64)
    }
}

impl Default for Interval {
    fn default() -> Self {
        Interval { a: -2.0, b: 2.0 }
    }
}

impl FromStr for Interval {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(',')
            .ok_or_else(|| Error::Parameter(format!("interval `{s}` is not of the form a,b")))?;
        match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
            (Ok(a), Ok(b)) => Interval::new(a, b),
            _ => Err(Error::Parameter(format!("interval `{s}` has non-numeric bounds"))),
        }
    }
}

/// Limit parameters: variance `σ²` of the Gaussian and the environment constant `μ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianRef {
    pub sigma2: f64,
    pub mu: f64,
}

impl GaussianRef {
    pub fn new(sigma2: f64, mu: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) || !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Parameter(format!(
                "need σ² > 0 and μ > 0, got σ² = {sigma2}, μ = {mu}"
            )));
        }
        Ok(GaussianRef { sigma2, mu })
    }

    /// Parameters tied by `σ² μ = 2`.
    pub fn from_mu(mu: f64) -> Result<Self> {
        Self::new(sigma2_from_mu(mu), mu)
    }

    /// `μ̂` from the cell-exact average of `1/ω` over `interval` at scale `T = √n`.
    pub fn estimate(env: &Environment, interval: Interval, n: f64) -> Result<Self> {
        Self::from_mu(env.average_inverse_omega(interval.a, interval.b, n.sqrt())?)
    }

    /// `σ̂² = Var(X_n)/n`, with `μ = 2/σ̂²`.
    pub fn from_variance(variance_per_step: f64) -> Result<Self> {
        Self::new(variance_per_step, 2.0 / variance_per_step)
    }

    /// `φ_{σ²}(x) = exp(−x²/2σ²) / √(2πσ²)`.
    pub fn phi(&self, x: f64) -> f64 {
        (-x * x / (2.0 * self.sigma2)).exp() / (2.0 * std::f64::consts::PI * self.sigma2).sqrt()
    }

    /// The modulated limit `φ_{σ²}(x)/μ`.
    pub fn limit(&self, x: f64) -> f64 {
        self.phi(x) / self.mu
    }
}

pub fn sigma2_from_mu(mu: f64) -> f64 {
    2.0 / mu
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileVariant {
    /// `√n b(n, k)`
    FB,
    /// `√n a(n, k)`
    FA,
    /// `ω_k √n g_n(k)` with `g_n = (p_n + p_{n+1})/2`
    ModulatedG,
    /// `ω_k √n p_n(k)`
    ModulatedA,
    /// `ω_k √t (𝒫^t)_{0,k}`
    Continuous,
    /// `√n p_n(k)` without the modulating factor
    Unmodulated,
}

/// A profile on the lattice cells covering an interval at one time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileCurve {
    pub variant: ProfileVariant,
    pub time: f64,
    /// Sites `k`; `xs[i] = ks[i]/√time`.
    pub ks: Vec<i64>,
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
}

impl ProfileCurve {
    fn build(variant: ProfileVariant, time: f64, interval: Interval, value: impl Fn(i64) -> Result<f64>) -> Result<Self> {
        if !(time > 0.0) {
            return Err(Error::Parameter("profiles need a positive time for the scaling".into()));
        }
        let root = time.sqrt();
        let (k0, k1) = interval.sites(root);
        let ks: Vec<i64> = (k0..=k1).collect();
        let xs = ks.iter().map(|&k| k as f64 / root).collect();
        let values = ks.iter().map(|&k| value(k)).collect::<Result<Vec<_>>>()?;
        Ok(ProfileCurve {
            variant,
            time,
            ks,
            xs,
            values,
        })
    }

    /// `sup_{x ∈ I} |profile(x) − target(x)|` for a target that is increasing on `x < 0` and
    /// decreasing on `x > 0`, such as a centred Gaussian.
    ///
    /// On each cell the target ranges between its values at the clipped cell ends and, if
    /// the cell contains 0, its peak; the distance is extremal at one of those points.
    pub fn sup_error(&self, interval: Interval, target: impl Fn(f64) -> f64) -> f64 {
        let root = self.time.sqrt();
        let mut worst = 0.0f64;
        for (&k, &v) in self.ks.iter().zip(&self.values) {
            let left = (k as f64 / root).max(interval.a);
            let right = ((k + 1) as f64 / root).min(interval.b);
            let mut probe = |x: f64| worst = worst.max((v - target(x)).abs());
            probe(left);
            probe(right);
            if left < 0.0 && 0.0 < right {
                probe(0.0);
            }
        }
        worst
    }

    /// `x,value` rows with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,value\n");
        for (x, v) in self.xs.iter().zip(&self.values) {
            let _ = writeln!(out, "{x:.16e},{v:.16e}");
        }
        out
    }
}

fn check_fingerprint(env: &Environment, snapshot: &KernelSnapshot) -> Result<()> {
    if snapshot.env_fingerprint != env.fingerprint() {
        return Err(Error::Usage("snapshot was computed in a different environment".into()));
    }
    Ok(())
}

/// Scales a snapshot diffusively on the cells covering `interval`.
///
/// Reversed kernels give `√n a` and `√n b`; the forward pmf gives `ω_k √n p_n(k)`; a
/// Poissonized kernel gives `ω_k √t (𝒫^t)_{0,k}`, computed as `ω_0 √t 𝔞(t,k)`.
pub fn scaled_profile(env: &Environment, snapshot: &KernelSnapshot, interval: Interval) -> Result<ProfileCurve> {
    check_fingerprint(env, snapshot)?;
    let time = snapshot.time.value();
    let root = time.sqrt();
    let f = &snapshot.f;
    match snapshot.kind {
        KernelKind::ReversedA => ProfileCurve::build(ProfileVariant::FA, time, interval, |k| Ok(root * f.get(k))),
        KernelKind::ReversedB => ProfileCurve::build(ProfileVariant::FB, time, interval, |k| Ok(root * f.get(k))),
        KernelKind::Forward => ProfileCurve::build(ProfileVariant::ModulatedA, time, interval, |k| {
            Ok(env.omega(k)? * root * f.get(k))
        }),
        KernelKind::Poissonized => {
            let w0 = env.omega(0)?;
            ProfileCurve::build(ProfileVariant::Continuous, time, interval, |k| {
                env.require(k, k)?;
                Ok(w0 * root * f.get(k))
            })
        }
    }
}

/// `√n p_n(k)` without the modulating factor.
pub fn unmodulated_profile(pmf: &LatticeFunction, n: u64, interval: Interval) -> Result<ProfileCurve> {
    let root = (n as f64).sqrt();
    ProfileCurve::build(ProfileVariant::Unmodulated, n as f64, interval, |k| Ok(root * pmf.get(k)))
}

/// `ω_k √n g_n(k)` from the pmfs at times `n` and `n+1`.
pub fn modulated_g_profile(
    env: &Environment,
    n: u64,
    pmf_n: &LatticeFunction,
    pmf_next: &LatticeFunction,
    interval: Interval,
) -> Result<ProfileCurve> {
    let root = (n as f64).sqrt();
    ProfileCurve::build(ProfileVariant::ModulatedG, n as f64, interval, |k| {
        Ok(env.omega(k)? * root * 0.5 * (pmf_n.get(k) + pmf_next.get(k)))
    })
}

/// Which discrete-time statistic a sup-error is taken of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscreteVariant {
    /// The two-step average `g_n`.
    G,
    /// The pmf `P(X_n = ·)` itself.
    Pmf,
}

/// `sup_{x∈I} |ω_{⌊√n x⌋} √n h_n(x) − φ_{σ²}(x)/μ|` with `h_n = g_n` or the pmf at `n`.
pub fn llt_sup_error_discrete(
    env: &Environment,
    n: u64,
    interval: Interval,
    gref: &GaussianRef,
    variant: DiscreteVariant,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::Parameter("n must be >= 1".into()));
    }
    let mut ev = Evolution::forward(env);
    ev.advance_to(n)?;
    let pmf_n = ev.current();
    let curve = match variant {
        DiscreteVariant::Pmf => modulated_profile_from_pmf(env, n, &pmf_n, interval)?,
        DiscreteVariant::G => {
            ev.step()?;
            modulated_g_profile(env, n, &pmf_n, &ev.current(), interval)?
        }
    };
    Ok(curve.sup_error(interval, |x| gref.limit(x)))
}

fn modulated_profile_from_pmf(env: &Environment, n: u64, pmf: &LatticeFunction, interval: Interval) -> Result<ProfileCurve> {
    let root = (n as f64).sqrt();
    ProfileCurve::build(ProfileVariant::ModulatedA, n as f64, interval, |k| {
        Ok(env.omega(k)? * root * pmf.get(k))
    })
}

/// Continuous-time sup-error on the Poissonized kernel, truncated at tail mass `tol`.
pub fn llt_sup_error_continuous(
    env: &Environment,
    t: f64,
    interval: Interval,
    gref: &GaussianRef,
    tol: f64,
) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Parameter("t must be > 0".into()));
    }
    let snap = poissonized_many(env, &[t], tol)?.pop().expect("one time");
    let curve = scaled_profile(env, &snap, interval)?;
    Ok(curve.sup_error(interval, |x| gref.limit(x)))
}

/// How the Gaussian reference is chosen at each time of a convergence curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GrefChoice {
    Fixed(GaussianRef),
    /// `μ̂` = cell-exact average of `1/ω` over the interval at scale `√n`; `σ̂² = 2/μ̂`.
    FromMu,
    /// `σ̂² = Var(X_n)/n`; `μ̂ = 2/σ̂²`.
    FromVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveVariant {
    Discrete(DiscreteVariant),
    Continuous { tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: u64,
    pub sup_error: f64,
    pub sigma2: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub variant: CurveVariant,
    pub interval: Interval,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,sup_error,sigma2,mu\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{:.16e},{:.16e},{:.16e}", r.n, r.sup_error, r.sigma2, r.mu);
        }
        out
    }
}

fn resolve_gref(env: &Environment, choice: GrefChoice, interval: Interval, n: u64, pmf: Option<&LatticeFunction>) -> Result<GaussianRef> {
    match choice {
        GrefChoice::Fixed(g) => Ok(g),
        GrefChoice::FromMu => GaussianRef::estimate(env, interval, n as f64),
        GrefChoice::FromVariance => {
            let pmf = pmf.ok_or_else(|| {
                Error::Usage("the variance route needs the discrete pmf".into())
            })?;
            let (_, var) = pmf_mean_variance(&KernelSnapshot {
                kind: KernelKind::Forward,
                time: KernelTime::Step(n),
                f: pmf.clone(),
                env_fingerprint: String::new(),
                truncation: None,
            })?;
            GaussianRef::from_variance(var / n as f64)
        }
    }
}

/// Sup-errors at each time of an increasing list, from a single evolution pass.
pub fn convergence_curve(
    env: &Environment,
    times: &[u64],
    interval: Interval,
    gref: GrefChoice,
    variant: CurveVariant,
) -> Result<ConvergenceTable> {
    if times.is_empty() || times[0] == 0 || times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter("times must be positive and strictly increasing".into()));
    }
    let mut rows = Vec::with_capacity(times.len());
    match variant {
        CurveVariant::Discrete(dv) => {
            let mut ev = Evolution::forward(env);
            for &n in times {
                ev.advance_to(n)?;
                let pmf_n = ev.current();
                let g = resolve_gref(env, gref, interval, n, Some(&pmf_n))?;
                let curve = match dv {
                    DiscreteVariant::Pmf => modulated_profile_from_pmf(env, n, &pmf_n, interval)?,
                    DiscreteVariant::G => {
                        ev.step()?;
                        modulated_g_profile(env, n, &pmf_n, &ev.current(), interval)?
                    }
                };
                rows.push(ConvergenceRow {
                    n,
                    sup_error: curve.sup_error(interval, |x| g.limit(x)),
                    sigma2: g.sigma2,
                    mu: g.mu,
                });
            }
        }
        CurveVariant::Continuous { tol } => {
            if gref == GrefChoice::FromVariance {
                return Err(Error::Usage("the variance route is only defined in discrete time".into()));
            }
            let ts: Vec<f64> = times.iter().map(|&n| n as f64).collect();
            let snaps = poissonized_many(env, &ts, tol)?;
            for (&n, snap) in times.iter().zip(&snaps) {
                let g = resolve_gref(env, gref, interval, n, None)?;
                let curve = scaled_profile(env, snap, interval)?;
                rows.push(ConvergenceRow {
                    n,
                    sup_error: curve.sup_error(interval, |x| g.limit(x)),
                    sigma2: g.sigma2,
                    mu: g.mu,
                });
            }
        }
    }
    Ok(ConvergenceTable {
        variant,
        interval,
        rows,
    })
}

/// The three aligned curves of the distribution figure at time `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Figure1Curves {
    pub n: u64,
    pub ks: Vec<i64>,
    /// `P(X_n = k)`.
    pub pmf: Vec<f64>,
    /// Gaussian density on `Z` with the mean and variance of the pmf.
    pub gauss: Vec<f64>,
    /// `const · a(n,k)` with `const = 1/Σ_j a(n,j)`.
    pub heat: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub heat_const: f64,
    /// `max_k |heat(k) − gauss(k)|` relative to the Gaussian peak.
    pub heat_gauss_rel_distance: f64,
}

/// Half-width of the plotted window in standard deviations.
pub const FIGURE1_HALF_WIDTH_SD: f64 = 6.0;

/// Computes the distribution figure data.
///
/// The heat curve is `a(n,·)` normalized to unit mass. The reversal identity makes this
/// `ω_k p_n(k) / E[ω_{X_n}]`, so the pmf and the heat curve coincide when `ω` is constant.
/// Curves are reported on `|k − mean| ≤ 6 sd`, clipped to the support `[−n, n]`.
pub fn figure1_curves(env: &Environment, n: u64) -> Result<Figure1Curves> {
    if n == 0 {
        return Err(Error::Parameter("n must be >= 1".into()));
    }
    let mut fwd = Evolution::forward(env);
    fwd.advance_to(n)?;
    let pmf = fwd.snapshot();
    let (mean, variance) = pmf_mean_variance(&pmf)?;
    let mut rev = Evolution::reversed(env);
    rev.advance_to(n)?;
    let a = rev.current();
    let heat_const = 1.0 / a.sum();

    let sd = variance.sqrt();
    let reach = n as i64;
    let lo = ((mean - FIGURE1_HALF_WIDTH_SD * sd).floor() as i64).max(-reach);
    let hi = ((mean + FIGURE1_HALF_WIDTH_SD * sd).ceil() as i64).min(reach);
    let ks: Vec<i64> = (lo..=hi).collect();
    let norm = 1.0 / (2.0 * std::f64::consts::PI * variance).sqrt();
    let gauss: Vec<f64> = ks
        .iter()
        .map(|&k| norm * (-(k as f64 - mean).powi(2) / (2.0 * variance)).exp())
        .collect();
    let heat: Vec<f64> = ks.iter().map(|&k| heat_const * a.get(k)).collect();
    let peak = gauss.iter().copied().fold(0.0, f64::max);
    let dist = heat
        .iter()
        .zip(&gauss)
        .map(|(h, g)| (h - g).abs())
        .fold(0.0, f64::max);
    Ok(Figure1Curves {
        n,
        pmf: ks.iter().map(|&k| pmf.f.get(k)).collect(),
        ks,
        gauss,
        heat,
        mean,
        variance,
        heat_const,
        heat_gauss_rel_distance: dist / peak,
    })
}

fn curve_csv(ks: &[i64], values: &[f64]) -> String {
    let mut out = String::from("x,value\n");
    for (k, v) in ks.iter().zip(values) {
        let _ = writeln!(out, "{k},{v:.16e}");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Figure1Output {
    pub files: Vec<PathBuf>,
    pub heat_gauss_rel_distance: f64,
    pub variance: f64,
    pub heat_const: f64,
}

/// Writes `<prefix>_pmf.csv`, `<prefix>_gauss.csv`, `<prefix>_heat.csv` and `<prefix>.svg`.
pub fn figure1(env: &Environment, n: u64, out_prefix: impl AsRef<Path>) -> Result<Figure1Output> {
    figure1_annotated(env, n, out_prefix, &[])
}

/// As [`figure1`], with `annotations` written as `# line` comments at the top of each CSV
/// and as an XML comment in the SVG.
pub fn figure1_annotated(
    env: &Environment,
    n: u64,
    out_prefix: impl AsRef<Path>,
    annotations: &[String],
) -> Result<Figure1Output> {
    let curves = figure1_curves(env, n)?;
    let prefix = out_prefix.as_ref().to_string_lossy().into_owned();
    let paths = [
        PathBuf::from(format!("{prefix}_pmf.csv")),
        PathBuf::from(format!("{prefix}_gauss.csv")),
        PathBuf::from(format!("{prefix}_heat.csv")),
        PathBuf::from(format!("{prefix}.svg")),
    ];
    let points = |vals: &[f64]| -> Vec<(f64, f64)> {
        curves.ks.iter().zip(vals).map(|(&k, &v)| (k as f64, v)).collect()
    };
    let plot = LinePlot {
        title: format!("Distribution of X_n at n = {n}"),
        x_label: "k".into(),
        y_label: "probability".into(),
        series: vec![
            Series {
                label: "P(X_n = k)".into(),
                color: "black".into(),
                points: points(&curves.pmf),
            },
            Series {
                label: "Gaussian, same variance".into(),
                color: "green".into(),
                points: points(&curves.gauss),
            },
            Series {
                label: "const · a(n,k)".into(),
                color: "blue".into(),
                points: points(&curves.heat),
            },
        ],
    };
    let comments: String = annotations.iter().map(|a| format!("# {a}\n")).collect();
    let svg = plot.render();
    let svg = if annotations.is_empty() {
        svg
    } else {
        let note: String = annotations.iter().map(|a| format!("  {}\n", a.replace("--", "- -"))).collect();
        svg.replacen("\n", &format!("\n<!--\n{note}-->\n"), 1)
    };
    let contents = [
        comments.clone() + &curve_csv(&curves.ks, &curves.pmf),
        comments.clone() + &curve_csv(&curves.ks, &curves.gauss),
        comments + &curve_csv(&curves.ks, &curves.heat),
        svg,
    ];
    for (path, body) in paths.iter().zip(contents) {
        fs::write(path, body).map_err(|e| Error::io(path, e))?;
    }
    Ok(Figure1Output {
        files: paths.to_vec(),
        heat_gauss_rel_distance: curves.heat_gauss_rel_distance,
        variance: curves.variance,
        heat_const: curves.heat_const,
    })
}
