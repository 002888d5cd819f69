//! Pathwise check of `N_{t,y}^{yhat} = m^t E_S[zeta_t; S_t = (y, yhat)]`.
//!
//! The auxiliary chain moves `S^1` as a simple walk and extends the label
//! `S^2` by a child index `k` with probability `T_k / m`, `T_k` the annealed
//! tail `sum_{j>=k} q(j)`. Along a path `zeta_t` multiplies the ratios
//! `A / a`, where `A` is the indicator that the labeled particle moved that
//! way and had at least `k` children, and `a = T_k / (2d)` its mean.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::env::EnvironmentField;
use crate::sim::{init_genealogy, step_genealogy, ParticleField, DEFAULT_GENEALOGY_CAP};
use crate::{Error, Result, Site};

pub const ZETA_PATH_CAP: u64 = 10_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZetaReport {
    /// Largest discrepancy over labeled sites `(y, yhat)`.
    pub max_error: f64,
    /// Largest discrepancy of the site totals `N_{t,y}`.
    pub aggregated_max_error: f64,
    pub paths: u64,
    pub particles: usize,
}

struct Enumerator<'a> {
    field: &'a EnvironmentField,
    particles: &'a dyn ParticleField,
    dim: usize,
    horizon: u64,
    m: f64,
    tails: Vec<f64>,
    labeled: HashMap<(Site, Vec<u32>), f64>,
    sites: HashMap<Site, f64>,
}

impl Enumerator<'_> {
    fn walk(&mut self, t: u64, x: Site, label: &mut Vec<u32>, weight: f64) {
        if t == self.horizon {
            *self.labeled.entry((x, label.clone())).or_insert(0.0) += weight;
            *self.sites.entry(x).or_insert(0.0) += weight;
            return;
        }
        let pmf = self.field.pmf_at(t, &x);
        let dir_drawn = self.particles.direction(t, &x, label, self.dim);
        let k_drawn = self.particles.child_count(t, &x, label, pmf);
        let two_d = 2.0 * self.dim as f64;
        for dir in 0..2 * self.dim {
            for k in 1..self.tails.len() {
                let tail = self.tails[k];
                let prob = tail / (two_d * self.m);
                let a_mean = tail / two_d;
                let hit = if dir == dir_drawn && k_drawn as usize >= k { 1.0 } else { 0.0 };
                label.push(k as u32);
                self.walk(t + 1, x.step(dir), label, weight * prob * (hit / a_mean));
                label.pop();
            }
        }
    }
}

/// Simulates the genealogy with `particles` and compares it against the
/// full path enumeration in the same draws.
pub fn verify_zeta_identity(
    field: &EnvironmentField,
    particles: &dyn ParticleField,
    dim: usize,
    horizon: usize,
) -> Result<ZetaReport> {
    let model = field.model();
    let annealed = model.annealed_pmf();
    let k_max = annealed.k_max() as usize;
    let tails: Vec<f64> = (0..=k_max).map(|k| annealed.tail(k)).collect();
    let branching = (2 * dim * k_max) as u64;
    let paths = branching
        .checked_pow(horizon as u32)
        .filter(|&p| p <= ZETA_PATH_CAP)
        .ok_or_else(|| Error::Cap(format!("{branching}^{horizon} chain paths exceed {ZETA_PATH_CAP}")))?;

    let mut state = init_genealogy(dim);
    for _ in 0..horizon {
        state = step_genealogy(&state, field, particles, DEFAULT_GENEALOGY_CAP)?;
    }
    let mut sim_labeled: HashMap<(Site, Vec<u32>), f64> = HashMap::new();
    let mut sim_sites: HashMap<Site, f64> = HashMap::new();
    for (label, x) in &state.particles {
        *sim_labeled.entry((*x, label.clone())).or_insert(0.0) += 1.0;
        *sim_sites.entry(*x).or_insert(0.0) += 1.0;
    }

    let mut en = Enumerator {
        field,
        particles,
        dim,
        horizon: horizon as u64,
        m: model.m(),
        tails,
        labeled: HashMap::new(),
        sites: HashMap::new(),
    };
    en.walk(0, Site::ORIGIN, &mut vec![1], 1.0);
    let scale = en.m.powi(horizon as i32);

    let keys: BTreeSet<&(Site, Vec<u32>)> = sim_labeled.keys().chain(en.labeled.keys()).collect();
    let max_error = keys
        .into_iter()
        .map(|k| (sim_labeled.get(k).unwrap_or(&0.0) - scale * en.labeled.get(k).unwrap_or(&0.0)).abs())
        .fold(0.0, f64::max);
    let sites: BTreeSet<&Site> = sim_sites.keys().chain(en.sites.keys()).collect();
    let aggregated_max_error = sites
        .into_iter()
        .map(|y| (sim_sites.get(y).unwrap_or(&0.0) - scale * en.sites.get(y).unwrap_or(&0.0)).abs())
        .fold(0.0, f64::max);
    Ok(ZetaReport { max_error, aggregated_max_error, paths, particles: state.particles.len() })
}
