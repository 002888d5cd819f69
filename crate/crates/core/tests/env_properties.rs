use std::sync::Arc;

use brwre::env::{build_environment, check_regular_growth, preset, EnvironmentField, EnvironmentModel, Verdict};
use brwre::kernels::return_probability;
use brwre::rational::{frac, int, Q};
use brwre::{Error, Site};
use num_traits::{One, Zero};
use proptest::prelude::*;

/// A pmf with rational entries on `0..=k_max` and a positive top entry.
fn pmf_strategy() -> impl Strategy<Value = Vec<Q>> {
    prop::collection::vec(0u32..6, 1..6).prop_map(|mut raw| {
        *raw.last_mut().unwrap() += 1;
        let total: u32 = raw.iter().sum();
        raw.into_iter().map(|r| frac(r as i64, total as i64)).collect()
    })
}

fn env_strategy() -> impl Strategy<Value = Vec<(Vec<Q>, Q)>> {
    prop::collection::vec((pmf_strategy(), 1u32..10), 1..5).prop_map(|atoms| {
        let total: u32 = atoms.iter().map(|a| a.1).sum();
        atoms.into_iter().map(|(p, w)| (p, frac(w as i64, total as i64))).collect()
    })
}

proptest! {
    #[test]
    fn annealed_moments_are_consistent(spec in env_strategy()) {
        let model = build_environment(spec).unwrap();
        let q = model.annealed_pmf().exact().to_vec();
        let ex = model.exact_moments();
        prop_assert_eq!(q.iter().cloned().sum::<Q>(), Q::one());
        let m: Q = q.iter().enumerate().map(|(k, p)| p * int(k as i64)).sum();
        let m2: Q = q.iter().enumerate().map(|(k, p)| p * int((k * k) as i64)).sum();
        let falling: Q = q.iter().enumerate().map(|(k, p)| p * int((k * k.saturating_sub(1)) as i64)).sum();
        prop_assert_eq!(&ex.m, &m);
        prop_assert_eq!(&ex.m2, &m2);
        prop_assert_eq!(&ex.m2 - &ex.m, falling.clone());
        prop_assert!(falling >= Q::zero());
        prop_assert!(ex.m2 >= ex.m);
        prop_assert!(ex.c >= Q::zero());
        if !ex.m.is_zero() {
            prop_assert!(ex.alpha >= Q::one());
            prop_assert_eq!(&ex.alpha * &ex.m * &ex.m, ex.mean_square.clone());
        }
        prop_assert_eq!(model.mean_square_via_tails(), ex.mean_square.clone());
    }

    #[test]
    fn pmf_entries_are_canonical(spec in env_strategy()) {
        let model = build_environment(spec).unwrap();
        for atom in model.atoms() {
            let p = atom.pmf.probs();
            prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(*p.last().unwrap() > 0.0);
        }
    }

    #[test]
    fn field_is_a_pure_function(seed in any::<u64>(), t in 0u64..1000, x in prop::array::uniform3(-50i32..50)) {
        let model = Arc::new(preset("env-a").unwrap());
        let a = EnvironmentField::new(model.clone(), seed, 3);
        let b = EnvironmentField::new(model, seed, 3);
        let x = Site::new(&x);
        prop_assert_eq!(a.atom_index(t, &x), b.atom_index(t, &x));
        prop_assert_eq!(a.slice(t).atom_index(&x), a.atom_index(t, &x));
    }
}

#[test]
fn full_field_replay_is_bit_exact() {
    let model = Arc::new(preset("env-b").unwrap());
    let draw = |seed| {
        let f = EnvironmentField::new(model.clone(), seed, 2);
        let mut out = Vec::new();
        for t in 0..20u64 {
            for x in -20..=20 {
                for y in -20..=20 {
                    out.push(f.pmf_at(t, &Site::new(&[x, y])).probs().to_vec());
                }
            }
        }
        out
    };
    assert_eq!(draw(5), draw(5));
    assert_ne!(draw(5), draw(6));
}

fn frequency_check(model: EnvironmentModel, seed: u64) {
    let model = Arc::new(model);
    let field = EnvironmentField::new(model.clone(), seed, 3);
    let n = 20_000usize;
    let mut hits = vec![0usize; model.atoms().len()];
    for i in 0..n as i32 {
        hits[field.atom_index((i % 7) as u64, &Site::new(&[i / 7, i % 3, -(i % 5)]))] += 1;
    }
    for (atom, &h) in model.atoms().iter().zip(&hits) {
        let w = atom.weight;
        let freq = h as f64 / n as f64;
        let bound = 4.0 * (w * (1.0 - w) / n as f64).sqrt();
        assert!((freq - w).abs() <= bound, "weight {w}: frequency {freq}, bound {bound}");
    }
}

#[test]
fn atom_frequencies_match_weights() {
    frequency_check(preset("env-a").unwrap(), 1);
    frequency_check(preset("env-b").unwrap(), 2);
    let three = vec![
        (vec![int(1)], frac(1, 10)),
        (vec![int(0), frac(1, 2), frac(1, 2)], frac(3, 10)),
        (vec![frac(1, 4), int(0), int(0), frac(3, 4)], frac(3, 5)),
    ];
    frequency_check(build_environment(three).unwrap(), 3);
}

#[test]
fn env_b_delta_two_frequency_over_distinct_sites() {
    let field = EnvironmentField::new(Arc::new(preset("env-b").unwrap()), 42, 3);
    let n = 10_000;
    let twos = (0..n)
        .filter(|&i| field.pmf_at(0, &Site::new(&[i % 100 - 50, i / 100 - 50, 0])).degenerate() == Some(2))
        .count();
    let freq = twos as f64 / n as f64;
    assert!((freq - 0.6).abs() <= 0.015, "{freq}");
}

#[test]
fn sample_pmf_rejects_negative_time() {
    let field = EnvironmentField::new(Arc::new(preset("env-b").unwrap()), 0, 3);
    assert!(matches!(field.sample_pmf(-1, &Site::ORIGIN), Err(Error::Domain(_))));
    assert_eq!(field.sample_pmf(3, &Site::ORIGIN).unwrap(), field.pmf_at(3, &Site::ORIGIN));
}

#[test]
fn build_examples() {
    let b = build_environment(vec![(vec![int(0), int(0), int(1)], frac(3, 5)), (vec![int(1)], frac(2, 5))]).unwrap();
    assert_eq!(b.exact_moments().m, frac(6, 5));
    let short = build_environment(vec![(vec![int(0), int(0), int(1)], frac(1, 2)), (vec![int(1)], frac(2, 5))]);
    assert!(matches!(short, Err(Error::WeightSum { .. })));
    let ex = preset("deterministic").unwrap();
    let ex = ex.exact_moments();
    assert_eq!((&ex.m, &ex.m2, &ex.alpha, &ex.c), (&int(1), &int(1), &int(1), &int(0)));
}

#[test]
fn regular_growth_in_three_dimensions() {
    let pi = return_probability(3, 10_000).unwrap().value;
    let b = check_regular_growth(&preset("env-b").unwrap(), 3, pi);
    assert_eq!(b.verdict, Verdict::Regular);
    assert!((b.product - 0.5675).abs() < 1e-3);
    let a = check_regular_growth(&preset("env-a").unwrap(), 3, pi);
    assert_eq!(a.verdict, Verdict::Fails);
    assert!((a.product - 1.135).abs() < 1e-3);
    let det = check_regular_growth(&preset("deterministic").unwrap(), 3, pi);
    assert_eq!(det.verdict, Verdict::Fails);
    assert_eq!(det.reasons, vec!["m ≤ 1".to_string()]);
    for d in [1, 2] {
        let r = check_regular_growth(&preset("env-b").unwrap(), d, 1.0);
        assert_eq!(r.verdict, Verdict::Fails);
        assert!(r.reasons.iter().any(|s| s.contains("recurrent")), "{:?}", r.reasons);
    }
}
