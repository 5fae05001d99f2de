//! Kernel evolution: conservation laws, the reversal identity, symmetry, the
//! Poissonized heat equation and trajectory sampling.

use bllt::evolution::{
    empirical_pmf, forward_pmf, pmf_mean_variance, poissonized, reversed_a, reversed_a_heatstep, reversed_b,
    sample_endpoints, total_variation,
};
use bllt::lattice::laplacian;
use bllt::markov::apply_p;
use bllt::{Environment, Evolution, LatticeFunction, Window};

fn uniform(seed: u64, radius: i64) -> Environment {
    Environment::generate("uniform:0.1,0.5".parse().unwrap(), Window::symmetric(radius), Some(seed)).unwrap()
}

fn constant(omega: f64, radius: i64) -> Environment {
    Environment::from_omegas(-radius, vec![omega; (2 * radius + 1) as usize]).unwrap()
}

#[test]
fn mass_and_mean_are_conserved_to_large_n() {
    let n_max = 1u64 << 15;
    let env = uniform(3, n_max as i64 + 2);
    let mut ev = Evolution::forward(&env);
    let mut next_check = 1u64;
    while ev.n() < n_max {
        ev.step().unwrap();
        if ev.n() == next_check {
            let mass: f64 = ev.values().iter().sum();
            let mean: f64 = ev.values().iter().enumerate().map(|(i, p)| (ev.lo() + i as i64) as f64 * p).sum();
            assert!((mass - 1.0).abs() <= 1e-12, "n={} mass={mass}", ev.n());
            assert!(mean.abs() <= 1e-9, "n={} mean={mean}", ev.n());
            assert!(ev.values().iter().all(|&p| p >= 0.0));
            next_check *= 2;
        }
    }
}

#[test]
fn reversal_identity_across_environments() {
    let n_max = 4096u64;
    for seed in 1..=20 {
        let env = uniform(seed, n_max as i64 + 2);
        let w0 = env.omega(0).unwrap();
        let mut fwd = Evolution::forward(&env);
        let mut rev = Evolution::reversed(&env);
        let mut worst = 0.0f64;
        while fwd.n() < n_max {
            fwd.step().unwrap();
            rev.step().unwrap();
            if fwd.n() % 64 == 0 || fwd.n() < 8 {
                for k in -(fwd.n() as i64)..=fwd.n() as i64 {
                    let lhs = w0 * rev.get(k);
                    let rhs = env.omega(k).unwrap() * fwd.get(k);
                    worst = worst.max((lhs - rhs).abs());
                }
            }
        }
        assert!(worst <= 1e-12, "seed {seed}: {worst:e}");
    }
}

#[test]
fn heat_update_and_operator_power_agree() {
    let env = uniform(17, 520);
    for n in [0, 1, 5, 64, 511] {
        let a = reversed_a(&env, n).unwrap();
        let h = reversed_a_heatstep(&env, n).unwrap();
        assert!(a.f.max_abs_diff(&h.f) <= 1e-13, "n={n}");
    }
}

#[test]
fn symmetric_environment_gives_symmetric_kernels() {
    let radius = 1100i64;
    let half = uniform(23, radius);
    let omegas: Vec<f64> = (-radius..=radius).map(|k| half.omega(k.abs()).unwrap()).collect();
    let env = Environment::from_omegas(-radius, omegas).unwrap();
    let n = 1024;
    let a = reversed_a(&env, n).unwrap().f;
    let p = forward_pmf(&env, n).unwrap().f;
    for k in 0..=n as i64 {
        assert!((a.get(k) - a.get(-k)).abs() <= 1e-13, "a at {k}");
        assert!((p.get(k) - p.get(-k)).abs() <= 1e-13, "p at {k}");
    }
}

#[test]
fn binomial_and_lazy_examples() {
    let ssrw = constant(0.5, 10);
    let p4 = forward_pmf(&ssrw, 4).unwrap().f;
    let expected = [1.0, 0.0, 4.0, 0.0, 6.0, 0.0, 4.0, 0.0, 1.0].map(|c| c / 16.0);
    for (k, e) in (-4..=4).zip(expected) {
        assert_eq!(p4.get(k), e, "k={k}");
    }
    assert_eq!(reversed_a(&ssrw, 4).unwrap().f, p4);
    let lazy = constant(0.25, 10);
    let p1 = forward_pmf(&lazy, 1).unwrap().f;
    assert_eq!((p1.get(-1), p1.get(0), p1.get(1)), (0.25, 0.5, 0.25));
    let (m, v) = pmf_mean_variance(&forward_pmf(&lazy, 8).unwrap()).unwrap();
    assert!(m.abs() <= 1e-10 && (v - 4.0).abs() <= 1e-10);
}

#[test]
fn b_kernel_mass_and_partial_identity() {
    let env = uniform(29, 300);
    let w0 = env.omega(0).unwrap();
    for n in [0u64, 1, 10, 200] {
        let b = reversed_b(&env, n).unwrap().f;
        let weighted: f64 = b.iter().map(|(k, v)| v / env.omega(k).unwrap()).sum::<f64>() * w0;
        assert!((weighted - 1.0).abs() <= 1e-12, "n={n}: {weighted}");
        assert!(b.values().iter().all(|&v| v >= 0.0));

        let pb = apply_p(&env, &b).unwrap();
        let a_n = reversed_a(&env, n).unwrap().f;
        let a_n2 = reversed_a(&env, n + 2).unwrap().f;
        for k in pb.lo()..=pb.hi() {
            let lhs = pb.get(k) - b.get(k);
            let rhs = 0.5 * (a_n2.get(k) - a_n.get(k));
            assert!((lhs - rhs).abs() <= 1e-13, "n={n} k={k}");
        }
    }
}

/// Largest central-difference residual of `∂_t 𝔞 = ω Δ𝔞` at time `t` over the sites `|k| ≤ 20`.
fn heat_residual(env: &Environment, t: f64, h: f64) -> f64 {
    let tol = 1e-15;
    let at = |s: f64| poissonized(env, s, tol).unwrap().f;
    let (minus, mid, plus) = (at(t - h), at(t), at(t + h));
    let lap: LatticeFunction = laplacian(&mid);
    (-20..=20)
        .map(|k| {
            let dt = (plus.get(k) - minus.get(k)) / (2.0 * h);
            (dt - env.omega(k).unwrap() * lap.get(k)).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn poissonized_kernel_solves_the_heat_equation() {
    let env = uniform(31, 200);
    let coarse = heat_residual(&env, 10.0, 1e-2);
    let fine = heat_residual(&env, 10.0, 1e-3);
    assert!(coarse > 0.0 && coarse < 1e-5, "{coarse:e}");
    // Second-order convergence: a tenfold smaller step shrinks the residual about a hundredfold.
    assert!(fine <= 0.02 * coarse, "{fine:e} vs {coarse:e}");
}

#[test]
fn single_step_samples_never_hold_for_the_simple_walk() {
    let env = constant(0.5, 4);
    let samples = sample_endpoints(&env, 1, 10_000, 5).unwrap();
    assert!(samples.iter().all(|&x| x == 1 || x == -1));
    assert!(samples.contains(&1) && samples.contains(&-1));
}

#[test]
fn sampled_endpoints_match_the_exact_pmf() {
    let env = uniform(37, 70);
    let samples = sample_endpoints(&env, 64, 1_000_000, 99).unwrap();
    let tv = total_variation(&empirical_pmf(&samples).unwrap(), &forward_pmf(&env, 64).unwrap().f);
    assert!(tv <= 0.01, "{tv}");
}

#[test]
fn sampled_mean_is_centred() {
    let env = uniform(41, 1030);
    let count = 100_000usize;
    let samples = sample_endpoints(&env, 1024, count, 7).unwrap();
    let mean = samples.iter().map(|&x| x as f64).sum::<f64>() / count as f64;
    let (_, var) = pmf_mean_variance(&forward_pmf(&env, 1024).unwrap()).unwrap();
    assert!(mean.abs() <= 4.0 * (var / count as f64).sqrt(), "{mean}");
    assert_eq!(samples, sample_endpoints(&env, 1024, count, 7).unwrap());
}
