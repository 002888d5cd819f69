use std::collections::BTreeMap;
use std::sync::Arc;

use brwre::env::{build_environment, EnvironmentField, EnvironmentModel};
use brwre::rational::{frac, int, to_f64, Q};
use brwre::sim::{
    init_genealogy, init_state, step_aggregate, step_genealogy, ForcedDraws, GenealogyState, KeyedParticles,
    OccupancyState, Sampler, SamplerConfig,
};
use brwre::Site;
use num_traits::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Occupancy = BTreeMap<Site, u128>;

/// Two atoms, each with a two-point offspring law.
fn two_point_env() -> Arc<EnvironmentModel> {
    Arc::new(
        build_environment(vec![
            (vec![frac(1, 4), int(0), frac(3, 4)], frac(1, 2)),
            (vec![frac(1, 2), frac(1, 2)], frac(1, 2)),
        ])
        .unwrap(),
    )
}

fn conv_power(pmf: &[Q], g: u128) -> Vec<Q> {
    let mut out = vec![Q::one()];
    for _ in 0..g {
        let mut next = vec![Q::zero(); out.len() + pmf.len() - 1];
        for (i, a) in out.iter().enumerate() {
            for (j, b) in pmf.iter().enumerate() {
                next[i + j] += a * b;
            }
        }
        out = next;
    }
    out
}

fn compositions(n: u128, parts: usize) -> Vec<Vec<u128>> {
    if parts == 1 {
        return vec![vec![n]];
    }
    (0..=n)
        .flat_map(|first| {
            compositions(n - first, parts - 1).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

fn factorial(n: u128) -> Q {
    (1..=n).fold(Q::one(), |acc, k| acc * int(k as i64))
}

/// One step of the aggregate law written out exactly: a direction multinomial
/// per site, then the offspring total of each direction group.
fn aggregate_step_law(law: &BTreeMap<Occupancy, Q>, field: &EnvironmentField, t: u64, dim: usize) -> BTreeMap<Occupancy, Q> {
    let k = 2 * dim;
    let mut out = BTreeMap::new();
    for (state, p) in law {
        let mut partial: Vec<(Occupancy, Q)> = vec![(Occupancy::new(), p.clone())];
        for (x, &n) in state {
            let pmf = field.pmf_at(t, x).exact().to_vec();
            let mut site_law: Vec<(Vec<(usize, u128)>, Q)> = Vec::new();
            for comp in compositions(n, k) {
                let mut weight = factorial(n) / Q::from_integer((k as i64).pow(n as u32).into());
                for &g in &comp {
                    weight /= factorial(g);
                }
                let mut outcomes: Vec<(Vec<(usize, u128)>, Q)> = vec![(vec![], weight)];
                for (dir, &g) in comp.iter().enumerate() {
                    let totals = conv_power(&pmf, g);
                    outcomes = outcomes
                        .into_iter()
                        .flat_map(|(v, w)| {
                            totals.iter().enumerate().filter(|(_, q)| !q.is_zero()).map(move |(c, q)| {
                                let mut v = v.clone();
                                v.push((dir, c as u128));
                                (v, &w * q)
                            })
                        })
                        .collect();
                }
                site_law.extend(outcomes);
            }
            partial = partial
                .into_iter()
                .flat_map(|(occ, w)| {
                    site_law.iter().map(move |(adds, q)| {
                        let mut occ = occ.clone();
                        for &(dir, c) in adds {
                            if c > 0 {
                                *occ.entry(x.step(dir)).or_insert(0) += c;
                            }
                        }
                        (occ, &w * q)
                    })
                })
                .collect();
        }
        for (occ, w) in partial {
            *out.entry(occ).or_insert_with(Q::zero) += w;
        }
    }
    out
}

/// Every per-particle draw vector of one genealogy step, fed through the
/// genealogy engine as forced draws.
fn genealogy_step_law(states: Vec<(GenealogyState, Q)>, field: &EnvironmentField) -> Vec<(GenealogyState, Q)> {
    let mut out = Vec::new();
    for (state, p) in states {
        let dim = state.dim;
        let mut choices: Vec<(ForcedDraws, Q)> = vec![(ForcedDraws::constant(0, 0), p)];
        for (label, x) in &state.particles {
            let pmf = field.pmf_at(state.t, x).exact().to_vec();
            let mut next = Vec::new();
            for (draws, w) in &choices {
                for dir in 0..2 * dim {
                    for (kids, q) in pmf.iter().enumerate().filter(|(_, q)| !q.is_zero()) {
                        let weight = w * q / int(2 * dim as i64);
                        next.push((draws.clone().with(label, dir, kids as u32), weight));
                    }
                }
            }
            choices = next;
        }
        for (draws, w) in choices {
            out.push((step_genealogy(&state, field, &draws, 1000).unwrap(), w));
        }
    }
    out
}

fn collapse(states: &[(GenealogyState, Q)]) -> BTreeMap<Occupancy, Q> {
    let mut out = BTreeMap::new();
    for (s, w) in states {
        *out.entry(s.occupancy().counts).or_insert_with(Q::zero) += w;
    }
    out
}

#[test]
fn modes_have_identical_laws_by_enumeration() {
    for (dim, horizon) in [(1usize, 3u64), (2, 2)] {
        for seed in 0..4 {
            let field = EnvironmentField::new(two_point_env(), seed, dim);
            let mut agg: BTreeMap<Occupancy, Q> = BTreeMap::from([(init_state(dim).counts, Q::one())]);
            let mut gen = vec![(init_genealogy(dim), Q::one())];
            for t in 0..horizon {
                agg = aggregate_step_law(&agg, &field, t, dim);
                gen = genealogy_step_law(gen, &field);
                let from_gen = collapse(&gen);
                assert_eq!(agg, from_gen, "d={dim} seed={seed} t={}", t + 1);
                assert_eq!(agg.values().cloned().sum::<Q>(), Q::one());
            }
        }
    }
}

/// Pearson goodness of fit, pooling cells with expected count below 5.
fn goodness_of_fit(observed: &BTreeMap<Occupancy, u64>, law: &BTreeMap<Occupancy, Q>, n: u64) -> f64 {
    let mut stat = 0.0;
    let mut cells = 0;
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (occ, p) in law {
        let e = to_f64(p) * n as f64;
        let o = *observed.get(occ).unwrap_or(&0) as f64;
        if e < 5.0 {
            pooled_obs += o;
            pooled_exp += e;
        } else {
            stat += (o - e).powi(2) / e;
            cells += 1;
        }
    }
    assert!(observed.keys().all(|k| law.contains_key(k)), "sample outside the support");
    if pooled_exp >= 5.0 {
        stat += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        cells += 1;
    }
    assert!(cells >= 5, "too few cells: {cells}");
    1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat)
}

fn sample_aggregate(field: &EnvironmentField, start: &OccupancyState, steps: u64, n: u64, seed: u64) -> BTreeMap<Occupancy, u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hist = BTreeMap::new();
    for _ in 0..n {
        let mut sampler = Sampler::new(&mut rng, SamplerConfig::default());
        let mut s = start.clone();
        for _ in 0..steps {
            s = step_aggregate(&s, field, &mut sampler).unwrap();
        }
        *hist.entry(s.counts).or_insert(0) += 1;
    }
    hist
}

#[test]
fn aggregate_sampler_fits_the_exact_law() {
    let dim = 2;
    let field = EnvironmentField::new(two_point_env(), 1, dim);
    let mut law = BTreeMap::from([(init_state(dim).counts, Q::one())]);
    for t in 0..2 {
        law = aggregate_step_law(&law, &field, t, dim);
    }
    let n = 10_000;
    let p = goodness_of_fit(&sample_aggregate(&field, &init_state(dim), 2, n, 7), &law, n);
    assert!(p > 0.001, "p = {p}");
}

#[test]
fn aggregate_sampler_fits_the_exact_law_at_large_counts() {
    let field = EnvironmentField::new(two_point_env(), 0, 1);
    let start = OccupancyState::from_counts(0, 1, [(Site::ORIGIN, 40)]);
    let law = aggregate_step_law(&BTreeMap::from([(start.counts.clone(), Q::one())]), &field, 0, 1);
    let n = 10_000;
    let p = goodness_of_fit(&sample_aggregate(&field, &start, 1, n, 11), &law, n);
    assert!(p > 0.001, "p = {p}");
}

#[test]
fn modes_agree_in_distribution_at_time_four() {
    let dim = 1;
    let field = EnvironmentField::new(two_point_env(), 3, dim);
    let n = 10_000u64;
    let agg = sample_aggregate(&field, &init_state(dim), 4, n, 5);
    let mut gen: BTreeMap<Occupancy, u64> = BTreeMap::new();
    for seed in 0..n {
        let particles = KeyedParticles::new(seed);
        let mut s = init_genealogy(dim);
        for _ in 0..4 {
            s = step_genealogy(&s, &field, &particles, 10_000).unwrap();
        }
        *gen.entry(s.occupancy().counts).or_insert(0) += 1;
    }
    let mut keys: Vec<&Occupancy> = agg.keys().chain(gen.keys()).collect();
    keys.sort();
    keys.dedup();
    let (mut stat, mut cells) = (0.0, 0);
    let (mut pa, mut pg) = (0.0, 0.0);
    for k in keys {
        let a = *agg.get(k).unwrap_or(&0) as f64;
        let g = *gen.get(k).unwrap_or(&0) as f64;
        if a + g < 10.0 {
            pa += a;
            pg += g;
        } else {
            stat += (a - g).powi(2) / (a + g);
            cells += 1;
        }
    }
    if pa + pg > 0.0 {
        stat += (pa - pg).powi(2) / (pa + pg);
        cells += 1;
    }
    let p = 1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat);
    assert!(cells > 10, "too few cells: {cells}");
    assert!(p > 0.001, "p = {p} over {cells} cells");
}
