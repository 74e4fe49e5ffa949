//! Independent oracles: each quantity is recomputed by a route that shares
//! no code with the library implementation.

mod common;

use std::f64::consts::PI;

use common::{law_a, seeded_env, seeded_law};
use rwre_killing::annealed::{annealed_exhaustive, annealed_survival, AnnealedConfig};
use rwre_killing::law::{construct_law, tail_quantities, Atom, Safety, SiteLaw, Triple};
use rwre_killing::potential::{detect_valley, scan_valleys};
use rwre_killing::rates::{d_k, grid_inf_c_k, lattice_tail_exponent, legendre, log_mgf, t_root, Sign};
use rwre_killing::rng::{stream, unit_f64};
use rwre_killing::walk::{
    enumerate_paths, hitting_time_tail, mc_survival, quenched_survival_dp, KillingWalkSpec, WindowPolicy,
};
use rwre_killing::{sample_window, Environment};

#[test]
fn law_a_tail_quantities_by_hand() {
    let law = law_a();
    let l3 = 3f64.ln();
    let t3 = tail_quantities(&law, 3);
    assert_eq!((t3.p_plus, t3.p_minus, t3.p_zero), (0.4, 0.4, 0.0));
    for v in [t3.eps_plus, t3.eps_minus, t3.delta_plus, t3.delta_minus] {
        assert!((v.unwrap() - l3).abs() < 1e-12);
    }
    let t1 = tail_quantities(&law, 1);
    assert_eq!((t1.p_plus, t1.p_minus), (0.4, 0.4));
    assert!((t1.p_zero - 0.2).abs() < 1e-15);
    assert_eq!((t1.delta_plus, t1.delta_minus), (Some(0.0), Some(0.0)));
}

#[test]
fn legendre_matches_grid_search() {
    let law = law_a();
    let k = Safety::Infinite;
    let l3 = 3f64.ln();
    for x in [0.1 * l3, 0.3 * l3, 0.5 * l3, 0.8 * l3] {
        for sign in [Sign::Plus, Sign::Minus] {
            let mut best = f64::NEG_INFINITY;
            let mut t = 0.0;
            while t <= 50.0 {
                // closed form: conditioned ln rho is +-ln 3 with probability 1/2
                let lambda = (0.5 * (t * l3).exp() + 0.5 * (-t * l3).exp()).ln();
                best = best.max(t * x - lambda);
                t += 1e-4;
            }
            let got = legendre(&law, k, x, sign).unwrap();
            assert!((got - best).abs() < 1e-6, "x = {x}: {got} vs {best}");
        }
    }
}

#[test]
fn log_mgf_by_direct_summation() {
    let law = seeded_law(11, 3);
    for &k in &[Safety::Level(2.0), Safety::Level(10.0), Safety::Infinite] {
        let admitted: Vec<&Atom> = law.atoms().iter().filter(|a| k.admits(a.triple.zero)).collect();
        let mass: f64 = admitted.iter().map(|a| a.weight).sum();
        for t in [0.0, 0.3, 1.0, 2.5] {
            let direct: f64 = admitted.iter().map(|a| a.weight * a.triple.rho().powf(-t)).sum::<f64>() / mass;
            let got = log_mgf(&law, k, t, Sign::Minus).unwrap();
            assert!((got - direct.ln()).abs() < 1e-12);
        }
    }
}

#[test]
fn tilt_roots_solve_their_equation() {
    for seed in 1..=5 {
        let law = seeded_law(seed, 2);
        let k = Safety::Infinite;
        let p = law.safe_probability(k);
        for sign in [Sign::Plus, Sign::Minus] {
            let t = t_root(&law, k, sign).unwrap();
            let s = if sign == Sign::Plus { 1.0 } else { -1.0 };
            let e: f64 = law
                .atoms()
                .iter()
                .filter(|a| a.triple.zero == 0.0)
                .map(|a| a.weight * a.triple.rho().powf(s * t))
                .sum();
            // E(rho^{±t} 1{safe}) = 1
            assert!((e - 1.0).abs() < 1e-9, "seed {seed}: {e} (P = {p})");
        }
    }
}

#[test]
fn two_routes_to_d_k() {
    let mut laws = vec![law_a()];
    laws.extend((1..=5).map(|s| seeded_law(s, 2)));
    for law in &laws {
        for h in [0.5, 1.0, 2.0] {
            let direct = d_k(law, Safety::Infinite, h).unwrap();
            let grid = grid_inf_c_k(law, Safety::Infinite, h).unwrap().value;
            assert!((direct - grid).abs() <= 1e-4, "{direct} vs {grid}");
        }
    }
}

fn ln_binomial_tail(m: u64, at_least: u64) -> f64 {
    let ln_choose = |j: u64| -> f64 { (1..=j).map(|i| ((m - j + i) as f64 / i as f64).ln()).sum() };
    let terms: Vec<f64> = (at_least..=m).map(|j| ln_choose(j) - m as f64 * 2f64.ln()).collect();
    let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
}

#[test]
fn lattice_convolution_equals_binomial_tail() {
    let law = law_a();
    let m = 200;
    let x = 0.5 * 3f64.ln();
    // S_m >= m x with steps +-ln 3 means at least 150 up-steps
    let oracle = -ln_binomial_tail(m, 150) / m as f64;
    let got = lattice_tail_exponent(&law, Safety::Infinite, Sign::Plus, m as usize, x).unwrap();
    assert!((got - oracle).abs() < 1e-10, "{got} vs {oracle}");
}

#[test]
fn dp_matches_path_enumeration() {
    let mut rng = stream(2024, 1, 0, 0);
    for case in 0..20 {
        let n = 1 + (unit_f64(&mut rng) * 12.0) as usize;
        let r = unit_f64(&mut rng);
        let env = seeded_env(case, -(n as i64) - 2, 2 * n + 5, 0.6);
        let spec = KillingWalkSpec::new(&env, r, 0, n, WindowPolicy::Strict).unwrap();
        let dp = quenched_survival_dp(&spec).unwrap();
        let paths = enumerate_paths(&spec).unwrap();
        assert!((dp.lower[n] - paths).abs() < 1e-12, "case {case}: {} vs {paths}", dp.lower[n]);
        assert!(dp.exact && dp.lower[n] == dp.upper[n]);
    }
}

/// Recursive sum over environments on `[-n, n]`, weighted by the law.
fn weighted_environments(law: &SiteLaw, n: usize, prefix: &mut Vec<Triple>, weight: f64, f: &mut impl FnMut(f64, &Environment)) {
    if prefix.len() == 2 * n + 1 {
        let env = Environment::new(-(n as i64), prefix.clone()).unwrap();
        f(weight, &env);
        return;
    }
    for atom in law.atoms() {
        prefix.push(atom.triple);
        weighted_environments(law, n, prefix, weight * atom.weight, f);
        prefix.pop();
    }
}

#[test]
fn exhaustive_annealed_matches_path_oracle() {
    let laws = [law_a(), seeded_law(3, 1)];
    for law in &laws {
        for n in 1..=4 {
            let r = 0.37;
            let exhaustive = annealed_exhaustive(law, r, n).unwrap();
            let mut oracle = 0.0;
            weighted_environments(law, n, &mut Vec::new(), 1.0, &mut |w, env| {
                let spec = KillingWalkSpec::new(env, r, 0, n, WindowPolicy::Strict).unwrap();
                oracle += w * enumerate_paths(&spec).unwrap();
            });
            assert!((exhaustive[n] - oracle).abs() < 1e-12, "n = {n}: {} vs {oracle}", exhaustive[n]);
        }
    }
}

#[test]
fn monte_carlo_covers_the_dp() {
    let env = seeded_env(77, -30, 61, 0.7);
    let spec = KillingWalkSpec::new(&env, 0.6, 0, 25, WindowPolicy::Strict).unwrap();
    let exact = quenched_survival_dp(&spec).unwrap().lower[25];
    let covered = (0..100)
        .filter(|&rep| {
            let est = mc_survival(&spec, 1000 + rep, 2000).unwrap();
            (est.fraction - exact).abs() <= 4.0 * est.stderr
        })
        .count();
    assert!(covered >= 95, "only {covered} of 100 replicates cover {exact}");
}

#[test]
fn annealed_curve_brackets_exhaustive_value() {
    let law = seeded_law(5, 1);
    let n = 6;
    let exact = annealed_exhaustive(&law, 0.5, n).unwrap()[n];
    let cfg = AnnealedConfig {
        r: 0.5,
        grid: vec![n],
        n_envs: 20_000,
        seed: 9,
        policy: WindowPolicy::Strict,
    };
    let curve = annealed_survival(&law, &cfg).unwrap();
    let pt = curve.points[0];
    assert!((pt.p - exact).abs() <= 4.0 * pt.stderr, "{} ± {} vs {exact}", pt.p, pt.stderr);
}

#[test]
fn srw_spectral_ratio() {
    let l = 10;
    let t = 10_000;
    let env = Environment::homogeneous(-l, l, Triple::new(0.5, 0.0, 0.5)).unwrap();
    let tail = hitting_time_tail(&env, -l, l, 0, t + 2).unwrap();
    // period two: compare two-step ratios with the top eigenvalue cos(pi / 2l)
    let ratio = (tail[t + 2] / tail[t]).sqrt();
    assert!((ratio - (PI / (2 * l) as f64).cos()).abs() < 1e-6, "{ratio}");
}

#[test]
fn sampled_frequencies_match_weights() {
    let law = law_a();
    let env = sample_window(&law, 42, 0, 1_000_000);
    let n = env.len() as f64;
    for atom in law.atoms() {
        let count = env.sites().iter().filter(|t| **t == atom.triple).count() as f64;
        let sigma = (n * atom.weight * (1.0 - atom.weight)).sqrt();
        assert!((count - n * atom.weight).abs() <= 4.0 * sigma, "{count} vs {}", n * atom.weight);
    }
}

#[test]
fn sampling_is_window_independent() {
    let law = seeded_law(8, 3);
    let small = sample_window(&law, 5, -5, 5);
    let large = sample_window(&law, 5, -10, 10);
    for x in -5..=5 {
        assert_eq!(small.site(x), large.site(x));
    }
    let single = SiteLaw::new(vec![Atom::new(0.3, 0.2, 0.5, 1.0)]).unwrap();
    assert!(sample_window(&single, 1, -3, 3).sites().iter().all(|t| *t == Triple::new(0.3, 0.2, 0.5)));
}

#[test]
fn geometric_construction_by_summation() {
    let q = |n: u64| 0.5f64.powi(n as i32);
    let (n0, n_trunc) = (2, 20);
    let built = construct_law(q, 1.0, n0, n_trunc).unwrap();
    let c = q(n0);
    for m in n0..=n_trunc {
        let tq = tail_quantities(&built.law, m);
        // independent sum over the atoms with holding at most 1/m
        let (mut plus, mut minus) = (0.0, 0.0);
        for a in built.law.atoms() {
            if a.triple.zero <= 1.0 / m as f64 + 1e-15 {
                if a.triple.log_rho() > 0.0 {
                    plus += a.weight;
                } else {
                    minus += a.weight;
                }
            }
            assert!((a.triple.log_rho().abs() - 2f64.ln()).abs() < 1e-12);
        }
        assert!((tq.p_plus - q(m) / (2.0 * c)).abs() < 1e-12);
        assert!((plus - tq.p_plus).abs() < 1e-12 && (minus - tq.p_minus).abs() < 1e-12);
        for v in [tq.eps_plus, tq.eps_minus, tq.delta_plus, tq.delta_minus] {
            assert!((v.unwrap() - 2f64.ln()).abs() < 1e-12);
        }
    }
}

#[test]
fn scan_agrees_with_pointwise_detection() {
    for seed in 0..6 {
        let env = seeded_env(300 + seed, -20, 41, 0.3);
        let n = 7.0f64;
        let ln_n = n.ln();
        for k in [Safety::Level(3.0), Safety::Infinite] {
            for h in [0.3, 0.8] {
                let scanned = scan_valleys(&env, n, k, h);
                let mut brute = Vec::new();
                for x in env.lo()..=env.hi() {
                    for w1 in 1..=(x - env.lo()) {
                        for w2 in 1..=(env.hi() - x) {
                            let d = detect_valley(&env, x, w1 as f64 / ln_n, w2 as f64 / ln_n, h, n, k).unwrap();
                            if d.holds {
                                brute.push(d);
                            }
                        }
                    }
                }
                assert_eq!(scanned, brute, "seed {seed}");
            }
        }
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let law = law_a();
    let cfg = AnnealedConfig {
        r: 0.5,
        grid: vec![16, 32, 64],
        n_envs: 64,
        seed: 3,
        policy: WindowPolicy::Strict,
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| annealed_survival(&law, &cfg).unwrap().to_csv())
    };
    assert_eq!(run(1), run(8));
}
