//! Acceptance gate: every criterion prints one `[PASS]`/`[FAIL]` line with the measured
//! value and its tolerance; the process fails if any criterion fails.
//!
//! Reference values come from independent oracles written here: exact integer binomials,
//! a log-space Bessel series, and closed forms derived by hand.

use std::time::Instant;

use bllt::diagnostics::{a3_statistic, gradient_monotonicity, lemma_bound_b, ReversedTrace};
use bllt::evolution::{
    empirical_pmf, forward_pmf, kolmogorov_normal, pmf_mean_variance, poissonized, sample_endpoints,
    total_variation,
};
use bllt::llt::{convergence_curve, figure1_curves, CurveVariant, DiscreteVariant, GaussianRef, GrefChoice, Interval};
use bllt::{Environment, Evolution, Law, Window};
use rayon::prelude::*;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn uniform_env(seed: u64, radius: i64) -> Environment {
    Environment::generate("uniform:0.1,0.5".parse().unwrap(), Window::symmetric(radius), Some(seed)).unwrap()
}

fn constant_env(omega: f64, radius: i64) -> Environment {
    Environment::generate(Law::Constant { omega }, Window::symmetric(radius), None).unwrap()
}

/// `C(n, j)` exactly in integers.
fn binomial(n: u64, j: u64) -> u128 {
    let j = j.min(n - j);
    (0..j).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// `e^{−t} I_k(t) = Σ_m exp((2m+k) ln(t/2) − ln m! − ln (m+k)! − t)`, with log-factorials
/// as plain sums of logarithms.
fn bessel_oracle(k: u64, t: f64) -> f64 {
    let terms = (t as usize) * 4 + 60;
    let mut ln_fact = vec![0.0f64; terms + k as usize + 2];
    for i in 1..ln_fact.len() {
        ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
    }
    let half = (t / 2.0).ln();
    (0..terms)
        .map(|m| {
            let e = (2 * m as u64 + k) as f64 * half - ln_fact[m] - ln_fact[m + k as usize] - t;
            e.exp()
        })
        .sum()
}

fn criterion_1() -> Outcome {
    let env = constant_env(0.5, 64);
    let mut worst = 0.0f64;
    for n in 0..=64u64 {
        let p = forward_pmf(&env, n).unwrap();
        for k in -(n as i64)..=n as i64 {
            let exact = if (n as i64 + k) % 2 == 0 {
                binomial(n, ((n as i64 + k) / 2) as u64) as f64 / 2f64.powi(n as i32)
            } else {
                0.0
            };
            worst = worst.max((p.f.get(k) - exact).abs());
        }
    }
    outcome(worst <= 1e-12, format!("max |pmf − binomial| = {worst:.3e} (tol 1e-12)"))
}

/// Lockstep sweep of the three evolutions over `n ≤ 4096` in 20 environments, returning
/// the worst heat-vs-P gap and the worst reversal-identity gap.
fn sweep_2_3() -> (f64, f64) {
    let horizon = 4096u64;
    let worst: Vec<(f64, f64)> = (1..=20u64)
        .into_par_iter()
        .map(|seed| {
            let env = uniform_env(seed, horizon as i64);
            let w0 = env.omega(0).unwrap();
            let omegas = env.omega_slice(-(horizon as i64), horizon as i64).unwrap();
            let mut a = Evolution::reversed(&env);
            let mut h = Evolution::heat(&env);
            let mut p = Evolution::forward(&env);
            let (mut gap_heat, mut gap_rev) = (0.0f64, 0.0f64);
            for _ in 0..horizon {
                a.step().unwrap();
                h.step().unwrap();
                p.step().unwrap();
                let lo = a.lo();
                for (i, ((&av, &hv), &pv)) in a.values().iter().zip(h.values()).zip(p.values()).enumerate() {
                    gap_heat = gap_heat.max((av - hv).abs());
                    let wk = omegas[(lo + i as i64 + horizon as i64) as usize];
                    gap_rev = gap_rev.max((w0 * av - wk * pv).abs());
                }
            }
            (gap_heat, gap_rev)
        })
        .collect();
    worst.iter().fold((0.0, 0.0), |acc, w| (acc.0.max(w.0), acc.1.max(w.1)))
}

fn criterion_4() -> Outcome {
    let horizon = 4096u64;
    let results: Vec<(usize, f64)> = (1..=20u64)
        .into_par_iter()
        .map(|seed| {
            let env = uniform_env(seed, horizon as i64 + 1);
            let mut checks = vec![gradient_monotonicity(&env, horizon).unwrap()];
            for n in [1, 4, 16, 64] {
                checks.push(lemma_bound_b(&env, n, horizon).unwrap());
            }
            let violations = checks.iter().filter(|c| !c.passed).count();
            let worst = checks.iter().map(|c| c.violation).fold(f64::NEG_INFINITY, f64::max);
            (violations, worst)
        })
        .collect();
    let violations: usize = results.iter().map(|r| r.0).sum();
    let worst = results.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    outcome(
        violations == 0,
        format!("{violations} violations in 20 environments, worst recorded violation {worst:.3e} (≤ 0 passes)"),
    )
}

fn criterion_5() -> Outcome {
    let env = constant_env(0.5, 400);
    let mut worst = 0.0f64;
    for t in [1.0, 10.0, 100.0] {
        let snap = poissonized(&env, t, 1e-12).unwrap();
        let reach = (3.0 * f64::sqrt(t)).floor() as i64;
        for k in -reach..=reach {
            worst = worst.max((snap.f.get(k) - bessel_oracle(k.unsigned_abs(), t)).abs());
        }
    }
    outcome(worst <= 1e-10, format!("max |𝔞 − e^(−t) I_|k|(t)| = {worst:.3e} (tol 1e-10)"))
}

fn criterion_6() -> Outcome {
    let laws = [
        "uniform:0.05,0.25",
        "uniform:0.01,0.25",
        "uniform:0.2,0.25",
        "discrete:0.1,0.25;0.5,0.5",
        "discrete:0.05,0.2,0.25;0.3,0.3,0.4",
    ];
    let cases: Vec<(String, u64)> = laws.iter().flat_map(|l| [(l.to_string(), 1), (l.to_string(), 2)]).collect();
    let worst = cases
        .par_iter()
        .map(|(law, seed)| {
            let env = Environment::generate(law.parse().unwrap(), Window::symmetric(2050), Some(*seed)).unwrap();
            assert!(env.is_lazy());
            let trace = ReversedTrace::compute(&env, 0, 2050).unwrap();
            trace.return_differences()[..=1024].iter().copied().fold(f64::NEG_INFINITY, f64::max)
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    outcome(worst <= 1e-14, format!("max_m a(2m+2,0) − a(2m+1,0) = {worst:.3e} over 10 lazy environments (tol 1e-14)"))
}

fn criterion_7() -> Outcome {
    let env = constant_env(0.5, (1 << 15) + 1);
    // Simple symmetric walk: σ² = 1 (unit steps) and μ = 1/ω = 2.
    let gref = GrefChoice::Fixed(GaussianRef::new(1.0, 2.0).unwrap());
    let times: Vec<u64> = (10..=15).map(|j| 1u64 << j).collect();
    let run = |v| convergence_curve(&env, &times, Interval::default(), gref, CurveVariant::Discrete(v)).unwrap();
    let (pmf, g) = rayon::join(|| run(DiscreteVariant::Pmf), || run(DiscreteVariant::G));
    let pmf_min = pmf.rows.iter().map(|r| r.sup_error).fold(f64::INFINITY, f64::min);
    let g_first = g.rows.first().unwrap().sup_error;
    let g_last = g.rows.last().unwrap().sup_error;
    outcome(
        pmf_min > 0.15 && g_last <= 0.5 * g_first,
        format!(
            "pmf_n error min over 2^10..2^15 = {pmf_min:.4} (> 0.15); g_n error 2^10 → 2^15: {g_first:.3e} → {g_last:.3e} (ratio {:.3}, ≤ 0.5)",
            g_last / g_first
        ),
    )
}

fn criterion_8() -> Outcome {
    let n_max = 1u64 << 15;
    let env = uniform_env(7, n_max as i64 + 1);
    let (curve, fig) = rayon::join(
        || {
            convergence_curve(
                &env,
                &[1 << 11, n_max],
                Interval::default(),
                GrefChoice::FromMu,
                CurveVariant::Discrete(DiscreteVariant::G),
            )
            .unwrap()
        },
        || figure1_curves(&env, n_max).unwrap(),
    );
    let (e11, e15) = (curve.rows[0].sup_error, curve.rows[1].sup_error);
    let rel = fig.heat_gauss_rel_distance;
    outcome(
        e15 <= 0.5 * e11 && rel <= 0.02,
        format!(
            "g_n error 2^11 → 2^15: {e11:.3e} → {e15:.3e} (ratio {:.3}, ≤ 0.5); figure sup-distance {:.2}% of peak (≤ 2%)",
            e15 / e11,
            100.0 * rel
        ),
    )
}

fn criterion_9() -> Outcome {
    let n = 1u64 << 14;
    let env = Environment::generate("periodic:1/4,1/2".parse().unwrap(), Window::symmetric(n as i64), None).unwrap();
    // Cell average of 1/ω over the period: (4 + 2)/2 = 3.
    let mu_hat = env.average_inverse_omega(-2.0, 2.0, (n as f64).sqrt()).unwrap();
    let (_, var) = pmf_mean_variance(&forward_pmf(&env, n).unwrap()).unwrap();
    let target = 2.0 / mu_hat;
    let rate = var / n as f64;
    let rel = (rate - target).abs() / target;
    outcome(
        (mu_hat - 3.0).abs() < 1e-12 && rel <= 0.02,
        format!("μ̂ = {mu_hat}, Var(X_n)/n = {rate:.6} vs 2/μ̂ = {target:.6}: relative gap {rel:.3e} (≤ 0.02)"),
    )
}

fn criterion_10() -> Outcome {
    let ssrw = a3_statistic(&constant_env(0.5, 1 << 12), 1 << 12).unwrap();
    let d_ssrw = ssrw.constants["D_hat"];
    let target = (2.0 / std::f64::consts::PI).sqrt();
    let ratios: Vec<f64> = (1..=10u64)
        .into_par_iter()
        .map(|seed| {
            let env = uniform_env(seed, 1 << 13);
            let d = &a3_statistic(&env, 1 << 13).unwrap().statistics["D_hat"];
            d[(1 << 13) - 1] / d[(1 << 12) - 1]
        })
        .collect();
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    outcome(
        (d_ssrw - target).abs() <= 0.01 && worst <= 1.01,
        format!(
            "ω ≡ 1/2: D̂(2^12) = {d_ssrw:.6} vs √(2/π) = {target:.6}; max D̂(2^13)/D̂(2^12) over 10 environments = {worst:.5} (≤ 1.01)"
        ),
    )
}

fn criterion_11() -> Outcome {
    let n = 4096u64;
    let env = uniform_env(7, n as i64);
    let samples = sample_endpoints(&env, n, 100_000, 2024).unwrap();
    let exact = forward_pmf(&env, n).unwrap();
    let tv = total_variation(&empirical_pmf(&samples).unwrap(), &exact.f);
    let mu_hat = env.average_inverse_omega(-2.0, 2.0, (n as f64).sqrt()).unwrap();
    let ks = kolmogorov_normal(&samples, n, 2.0 / mu_hat).unwrap();
    outcome(
        tv <= 0.02 && ks <= 0.02,
        format!("TV(empirical, exact) = {tv:.4} (≤ 0.02); Kolmogorov distance to N(0, 2/μ̂ = {:.4}) = {ks:.4} (≤ 0.02)", 2.0 / mu_hat),
    )
}

fn main() {
    let started = Instant::now();
    let mut sweep = None;
    let criteria: Vec<(&str, Box<dyn Fn(&mut Option<(f64, f64)>) -> Outcome>)> = vec![
        ("binomial oracle", Box::new(|_| criterion_1())),
        (
            "heat update equals repeated P",
            Box::new(|s: &mut Option<(f64, f64)>| {
                let (heat, _) = *s.get_or_insert_with(sweep_2_3);
                outcome(heat <= 1e-13, format!("max |a − a_heat| = {heat:.3e} over 20 environments, n ≤ 4096 (tol 1e-13)"))
            }),
        ),
        (
            "reversal identity",
            Box::new(|s: &mut Option<(f64, f64)>| {
                let (_, rev) = *s.get_or_insert_with(sweep_2_3);
                outcome(rev <= 1e-12, format!("max |ω_0 a(n,k) − ω_k p_n(k)| = {rev:.3e} (tol 1e-12)"))
            }),
        ),
        ("energy monotonicity and summed bound", Box::new(|_| criterion_4())),
        ("Poissonization vs Bessel", Box::new(|_| criterion_5())),
        ("lazy aperiodicity", Box::new(|_| criterion_6())),
        ("simple walk periodicity dichotomy", Box::new(|_| criterion_7())),
        ("local limit in a random environment", Box::new(|_| criterion_8())),
        ("effective constant σ²μ = 2", Box::new(|_| criterion_9())),
        ("heat-kernel constant", Box::new(|_| criterion_10())),
        ("Monte Carlo cross-check", Box::new(|_| criterion_11())),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let o = run(&mut sweep);
        if !o.passed {
            failed += 1;
        }
        println!(
            "[{}] {:>2}. {name}: {} ({:.1} s)",
            if o.passed { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            t0.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} of {} criteria passed in {:.1} s",
        criteria.len() - failed,
        criteria.len(),
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
