use std::sync::Arc;

use brwre::env::{build_environment, preset, EnvironmentField};
use brwre::kernels::return_probability;
use brwre::oracle::{
    brute_force_moments, quenched_mean, two_walk_series, two_walk_series_exact, verify_zeta_identity,
};
use brwre::prf::{derive_seed, domain};
use brwre::rational::{frac, int, to_f64, Q};
use brwre::sim::{init_genealogy, run_ensemble, step_genealogy, KeyedParticles, RunConfig};
use brwre::Site;
use proptest::prelude::*;

/// Environments with small supports so enumeration stays cheap.
fn env_strategy() -> impl Strategy<Value = Vec<(Vec<Q>, Q)>> {
    let pmf = prop::collection::vec(0u32..4, 1..4).prop_map(|mut raw| {
        *raw.last_mut().unwrap() += 1;
        let total: u32 = raw.iter().sum();
        raw.into_iter().map(|r| frac(r as i64, total as i64)).collect::<Vec<_>>()
    });
    prop::collection::vec((pmf, 1u32..5), 1..3)
        .prop_map(|atoms| {
            let total: u32 = atoms.iter().map(|a| a.1).sum();
            atoms.into_iter().map(|(p, w)| (p, frac(w as i64, total as i64))).collect::<Vec<_>>()
        })
        .prop_filter("positive mean", |spec| spec.iter().any(|(p, _)| p.len() > 1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn first_second_moment_telescopes(spec in env_strategy(), d in 1usize..=3) {
        let model = build_environment(spec).unwrap();
        let ex = model.exact_moments();
        let exact = two_walk_series_exact(&model, d, 1);
        prop_assert_eq!(&exact.second_moment[1], &(&ex.m2 / (&ex.m * &ex.m)));
        let s = two_walk_series(&model, d, 1).unwrap();
        prop_assert!((s.second_moment[1] - to_f64(&exact.second_moment[1])).abs() < 1e-12);
        prop_assert!((s.u[1] - to_f64(&ex.alpha)).abs() < 1e-12);
    }

    #[test]
    fn dp_agrees_with_enumeration(spec in env_strategy(), d in 1usize..=2) {
        let model = build_environment(spec).unwrap();
        let s = two_walk_series(&model, d, 2).unwrap();
        let m = model.m();
        for t in 1..=2 {
            let (mean, square) = brute_force_moments(&model, d, t).unwrap();
            prop_assert!((to_f64(&mean) / m.powi(t as i32) - 1.0).abs() < 1e-12);
            prop_assert!((to_f64(&square) / m.powi(2 * t as i32) - s.second_moment[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn overlap_is_below_second_moment(spec in env_strategy(), d in 1usize..=3) {
        let model = build_environment(spec).unwrap();
        let s = two_walk_series(&model, d, 30).unwrap();
        for t in 0..=30 {
            prop_assert!(s.overlap[t] <= s.second_moment[t] * (1.0 + 1e-12), "t={}", t);
            prop_assert!(s.u[t] > 0.0 && s.u[t] <= s.alpha.powi(t as i32).max(s.alpha) * (1.0 + 1e-12));
        }
    }
}

#[test]
fn env_b_series_examples() {
    let s = two_walk_series(&preset("env-b").unwrap(), 3, 2).unwrap();
    assert!((s.u[1] - 5.0 / 3.0).abs() < 1e-12);
    assert!((s.second_moment[1] - 5.0 / 3.0).abs() < 1e-12);
    assert!((s.second_moment[2] - 5.76 / 2.0736).abs() < 1e-12);
    let (mean, square) = brute_force_moments(&preset("env-b").unwrap(), 3, 1).unwrap();
    assert_eq!((mean, square), (frac(6, 5), frac(12, 5)));
    let (_, square) = brute_force_moments(&preset("env-b").unwrap(), 3, 2).unwrap();
    assert_eq!(square, frac(144, 25));
}

#[test]
fn u_approaches_the_geometric_limit() {
    let model = preset("env-b").unwrap();
    let pi = return_probability(3, 100_000).unwrap().value;
    let alpha = model.moments().alpha;
    let limit = alpha * (1.0 - pi) / (1.0 - alpha * pi);
    let geometric: f64 = (0..400).map(|l| alpha.powi(l + 1) * pi.powi(l) * (1.0 - pi)).sum();
    assert!((geometric - limit).abs() < 1e-12);
    let s = two_walk_series(&model, 3, 200).unwrap();
    assert!(s.truncated_mass < 1e-12);
    let gaps: Vec<f64> = [50, 100, 200].iter().map(|&t| limit - s.u[t]).collect();
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2] && gaps[2] > 0.0, "{gaps:?}");
    // u_T = L - a T^{-1/2} - b T^{-1} + ...: eliminate both terms.
    let r2 = std::f64::consts::SQRT_2;
    let first = |t: usize| (r2 * s.u[2 * t] - s.u[t]) / (r2 - 1.0);
    let extrapolated = 2.0 * first(100) - first(50);
    assert!((extrapolated - limit).abs() < 1e-3, "{extrapolated} vs {limit}");
}

#[test]
fn phase_transition_in_the_second_moment() {
    let b = two_walk_series(&preset("env-b").unwrap(), 3, 200).unwrap();
    let max = b.second_moment.iter().cloned().fold(f64::MIN, f64::max);
    assert!((max - b.second_moment[200]) / max <= 0.01);
    let a = two_walk_series(&preset("env-a").unwrap(), 3, 200).unwrap();
    assert!(a.second_moment[200] > 2.0 * a.second_moment[50]);
    assert!(a.second_moment.windows(2).skip(1).all(|w| w[1] > w[0]));
}

#[test]
fn deterministic_quenched_mean_is_the_walk_law() {
    let field = EnvironmentField::new(Arc::new(preset("deterministic").unwrap()), 0, 2);
    let q = quenched_mean(&field, 2, 4);
    assert!(q.z.iter().all(|z| (z - 1.0).abs() < 1e-15));
    assert!((q.maps[2][&Site::new(&[0, 0])] - 0.25).abs() < 1e-15);
    assert!((q.maps[2][&Site::new(&[1, 1])] - 0.125).abs() < 1e-15);
}

#[test]
fn quenched_total_has_annealed_mean_one() {
    let model = Arc::new(preset("env-b").unwrap());
    let n = 10_000;
    let z: Vec<f64> = (0..n).map(|s| quenched_mean(&EnvironmentField::new(model.clone(), s, 3), 3, 5).z[5]).collect();
    let mean = z.iter().sum::<f64>() / n as f64;
    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    assert!((mean - 1.0).abs() <= 3.0 * se, "{mean} ± {se}");
}

#[test]
fn quenched_transfer_matches_genealogy_monte_carlo() {
    let dim = 2;
    let horizon = 6;
    let model = Arc::new(preset("env-b").unwrap());
    // a field whose root site branches, so the population is not trivially extinct
    let seed = (0..).find(|&s| EnvironmentField::new(model.clone(), s, dim).mean_at(0, &Site::ORIGIN) > 0.0).unwrap();
    let field = EnvironmentField::new(model.clone(), seed, dim);
    let q = quenched_mean(&field, dim, horizon);
    let runs = 100_000u64;
    let norm = model.m().powi(-(horizon as i32));
    let mut sums: std::collections::BTreeMap<Site, (f64, f64)> = Default::default();
    for r in 0..runs {
        let particles = KeyedParticles::new(derive_seed(1, domain::REPLICA_PARTICLE, r));
        let mut s = init_genealogy(dim);
        for _ in 0..horizon {
            s = step_genealogy(&s, &field, &particles, 100_000).unwrap();
        }
        for (x, c) in s.occupancy().counts {
            let v = c as f64 * norm;
            let e = sums.entry(x).or_default();
            e.0 += v;
            e.1 += v * v;
        }
    }
    let n = runs as f64;
    for (x, &expected) in &q.maps[horizon] {
        let (s1, s2) = sums.get(x).copied().unwrap_or_default();
        let mean = s1 / n;
        let se = ((s2 / n - mean * mean).max(0.0) / (n - 1.0)).sqrt();
        assert!((mean - expected).abs() <= 3.0 * se + 1e-12, "site {x:?}: {mean} ± {se} vs {expected}");
    }
    assert!(sums.keys().all(|x| q.maps[horizon].get(x).is_some_and(|&w| w > 0.0)));
}

#[test]
fn monte_carlo_matches_the_two_walk_oracle() {
    let model = Arc::new(preset("env-b").unwrap());
    let mut cfg = RunConfig::new(3, 10, model.clone());
    cfg.env_seed = 17;
    cfg.particle_seed = 18;
    let res = run_ensemble(&cfg, 20_000).unwrap();
    let oracle = two_walk_series(&model, 3, 10).unwrap();
    let nbar = &res.summary.series["Nbar"];
    let sq = &res.summary.series["Nbar_sq"];
    for (k, &t) in res.summary.times.iter().enumerate() {
        assert!((nbar.mean[k] - 1.0).abs() <= 3.0 * nbar.se[k] + 1e-12, "t={t}: {} ± {}", nbar.mean[k], nbar.se[k]);
        if [2, 5, 10].contains(&t) {
            let target = oracle.second_moment[t as usize];
            assert!((sq.mean[k] - target).abs() <= 3.0 * sq.se[k], "t={t}: {} ± {} vs {target}", sq.mean[k], sq.se[k]);
        }
    }
    assert!(res.summary.survival.last().copied().unwrap() > 0.0);
}

#[test]
fn zeta_identity_on_random_seeds() {
    let model = Arc::new(preset("env-b").unwrap());
    for i in 0..20 {
        let field = EnvironmentField::new(model.clone(), derive_seed(3, domain::REPLICA_ENV, i), 3);
        let particles = KeyedParticles::new(derive_seed(4, domain::REPLICA_PARTICLE, i));
        let r = verify_zeta_identity(&field, &particles, 3, 3).unwrap();
        assert!(r.max_error < 1e-12 && r.aggregated_max_error < 1e-12, "seed {i}: {r:?}");
    }
    let binary = Arc::new(build_environment(vec![(vec![int(0), frac(1, 3), frac(2, 3)], int(1))]).unwrap());
    let field = EnvironmentField::new(binary, 9, 2);
    let r = verify_zeta_identity(&field, &KeyedParticles::new(10), 2, 3).unwrap();
    assert!(r.max_error < 1e-12, "{r:?}");
}
