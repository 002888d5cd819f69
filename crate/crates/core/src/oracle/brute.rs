//! Exact moments of `N_t` by enumerating every environment and particle draw.

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::env::EnvironmentModel;
use crate::rational::{self, Q};
use crate::{Error, Result, Site};

pub const DEFAULT_ENUMERATION_CAP: u64 = 20_000_000;

pub type Config = BTreeMap<Site, u32>;

struct Budget {
    used: u64,
    cap: u64,
}

impl Budget {
    fn spend(&mut self, n: u64) -> Result<()> {
        self.used = self.used.saturating_add(n);
        if self.used > self.cap {
            return Err(Error::Cap(format!("enumeration exceeds {} outcomes", self.cap)));
        }
        Ok(())
    }
}

/// Law of what the `n` particles at one site send to each direction: the
/// site's atom is drawn once, then every particle draws a direction and a
/// child count.
fn site_outcomes(n: u32, model: &EnvironmentModel, dim: usize, budget: &mut Budget) -> Result<Vec<(Vec<u32>, Q)>> {
    let mut total: BTreeMap<Vec<u32>, Q> = BTreeMap::new();
    let dir_prob = rational::frac(1, 2 * dim as i64);
    for atom in model.atoms() {
        let options: Vec<(usize, u32, Q)> = (0..2 * dim)
            .flat_map(|dir| {
                atom.pmf
                    .exact()
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| !p.is_zero())
                    .map(move |(k, p)| (dir, k as u32, p.clone()))
                    .collect::<Vec<_>>()
            })
            .map(|(dir, k, p)| (dir, k, p * &dir_prob))
            .collect();
        let mut law: BTreeMap<Vec<u32>, Q> = BTreeMap::from([(vec![0; 2 * dim], atom.weight_exact.clone())]);
        for _ in 0..n {
            budget.spend((law.len() * options.len()) as u64)?;
            let mut next: BTreeMap<Vec<u32>, Q> = BTreeMap::new();
            for (sent, p) in &law {
                for (dir, k, q) in &options {
                    let mut s = sent.clone();
                    s[*dir] += k;
                    *next.entry(s).or_insert_with(Q::zero) += p * q;
                }
            }
            law = next;
        }
        for (sent, p) in law {
            *total.entry(sent).or_insert_with(Q::zero) += p;
        }
    }
    Ok(total.into_iter().collect())
}

/// `(E[N_T], E[N_T^2])` in exact arithmetic.
pub fn brute_force_moments(model: &EnvironmentModel, dim: usize, horizon: usize) -> Result<(Q, Q)> {
    brute_force_moments_capped(model, dim, horizon, DEFAULT_ENUMERATION_CAP)
}

pub fn brute_force_moments_capped(model: &EnvironmentModel, dim: usize, horizon: usize, cap: u64) -> Result<(Q, Q)> {
    let dist = occupancy_law(model, dim, horizon, cap)?;
    let mut first = Q::zero();
    let mut second = Q::zero();
    for (state, p) in &dist {
        let n = Q::from_integer(state.values().map(|&c| c as i64).sum::<i64>().into());
        first += p * &n;
        second += p * &n * &n;
    }
    Ok((first, second))
}

/// `E[sum_x N_{T,x}^2]` in exact arithmetic.
pub fn brute_force_overlap(model: &EnvironmentModel, dim: usize, horizon: usize) -> Result<Q> {
    let dist = occupancy_law(model, dim, horizon, DEFAULT_ENUMERATION_CAP)?;
    Ok(dist
        .iter()
        .map(|(state, p)| p * Q::from_integer(state.values().map(|&c| (c as i64).pow(2)).sum::<i64>().into()))
        .sum())
}

/// Exact law of the annealed occupancy at time `horizon`.
pub fn occupancy_law(model: &EnvironmentModel, dim: usize, horizon: usize, cap: u64) -> Result<BTreeMap<Config, Q>> {
    let mut budget = Budget { used: 0, cap };
    let mut dist: BTreeMap<Config, Q> = BTreeMap::from([(Config::from([(Site::ORIGIN, 1)]), Q::from_integer(1.into()))]);
    for _ in 0..horizon {
        let mut next: BTreeMap<Config, Q> = BTreeMap::new();
        for (state, p) in &dist {
            let mut partial: BTreeMap<Config, Q> = BTreeMap::from([(Config::new(), p.clone())]);
            for (x, &n) in state {
                let local = site_outcomes(n, model, dim, &mut budget)?;
                budget.spend((partial.len() * local.len()) as u64)?;
                let mut merged: BTreeMap<Config, Q> = BTreeMap::new();
                for (acc, pa) in &partial {
                    for (sent, pl) in &local {
                        let mut c = acc.clone();
                        for (dir, &k) in sent.iter().enumerate() {
                            if k > 0 {
                                *c.entry(x.step(dir)).or_insert(0) += k;
                            }
                        }
                        *merged.entry(c).or_insert_with(Q::zero) += pa * pl;
                    }
                }
                partial = merged;
            }
            for (c, q) in partial {
                *next.entry(c).or_insert_with(Q::zero) += q;
            }
        }
        dist = next;
    }
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::preset;
    use crate::rational::frac;

    #[test]
    fn env_b_first_step() {
        let (m1, m2) = brute_force_moments(&preset("env-b").unwrap(), 3, 1).unwrap();
        assert_eq!((m1, m2), (frac(6, 5), frac(12, 5)));
    }

    #[test]
    fn env_b_second_step() {
        let (m1, m2) = brute_force_moments(&preset("env-b").unwrap(), 3, 2).unwrap();
        assert_eq!(m1, frac(36, 25));
        assert_eq!(m2, frac(576, 100));
    }

    #[test]
    fn cap_is_enforced() {
        let r = brute_force_moments_capped(&preset("env-a").unwrap(), 3, 3, 1000);
        assert!(matches!(r, Err(Error::Cap(_))));
    }
}
