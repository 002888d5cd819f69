//! Forward simulation.
//!
//! A particle at `(t, x)` picks one neighbor `x + e` uniformly and one child
//! count `K` from `q_{t,x}`; all `K` children sit at `x + e` at time `t + 1`.
//! Two representations realize this law: aggregated site counts
//! ([`OccupancyState`], [`Grid`]) and an explicit genealogy
//! ([`GenealogyState`]).

mod genealogy;
mod grid;
mod run;
mod sampling;

use std::collections::BTreeMap;

use rand::RngCore;

pub use genealogy::{
    genealogy_draws, step_genealogy, ForcedDraws, KeyedParticles, ParticleDraw, ParticleField,
    DEFAULT_GENEALOGY_CAP,
};
pub use grid::{Grid, DEFAULT_CELL_CAP};
pub use run::{
    median, run_ensemble, run_ensemble_until_alive, run_trajectory, EnsembleResult, EnsembleSummary, Mode, ReplicaOutcome, RunConfig,
    RunStatus, SeriesSummary, Trajectory,
};
pub use sampling::{Sampler, SamplerConfig, DEFAULT_EXACT_THRESHOLD, SMALL_COUNT};

use crate::env::EnvironmentField;
use crate::{Error, Result, Site};

/// Read access to the particle counts of a state.
pub trait SiteCounts {
    fn time(&self) -> u64;
    fn dim(&self) -> usize;
    fn total(&self) -> u128;
    /// Calls `f(x, N_{t,x})` for every occupied site.
    fn visit<F: FnMut(&[i32], u128)>(&self, f: F);
}

/// Site counts `N_{t,x}` at one time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OccupancyState {
    pub t: u64,
    pub dim: usize,
    pub counts: BTreeMap<Site, u128>,
}

impl OccupancyState {
    pub fn total(&self) -> u128 {
        self.counts.values().sum()
    }

    pub fn is_extinct(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn from_counts(t: u64, dim: usize, counts: impl IntoIterator<Item = (Site, u128)>) -> Self {
        let counts = counts.into_iter().filter(|&(_, c)| c > 0).collect();
        OccupancyState { t, dim, counts }
    }

    /// Parity and range invariants of an occupancy at time `t`.
    pub fn check_invariants(&self) -> bool {
        self.counts.iter().all(|(x, &c)| c > 0 && x.l1() <= self.t && x.l1() % 2 == self.t % 2)
    }
}

impl SiteCounts for OccupancyState {
    fn time(&self) -> u64 {
        self.t
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn total(&self) -> u128 {
        OccupancyState::total(self)
    }

    fn visit<F: FnMut(&[i32], u128)>(&self, mut f: F) {
        for (x, &c) in &self.counts {
            f(x.coords(self.dim), c);
        }
    }
}

/// Particles with their genealogical labels, `1` for the root and
/// `(y, k)` for the `k`-th child of `y`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenealogyState {
    pub t: u64,
    pub dim: usize,
    pub particles: Vec<(Vec<u32>, Site)>,
}

impl GenealogyState {
    pub fn occupancy(&self) -> OccupancyState {
        let mut counts = BTreeMap::new();
        for (_, x) in &self.particles {
            *counts.entry(*x).or_insert(0u128) += 1;
        }
        OccupancyState { t: self.t, dim: self.dim, counts }
    }
}

/// One particle at the origin at time 0.
pub fn init_state(dim: usize) -> OccupancyState {
    OccupancyState { t: 0, dim, counts: BTreeMap::from([(Site::ORIGIN, 1)]) }
}

pub fn init_genealogy(dim: usize) -> GenealogyState {
    GenealogyState { t: 0, dim, particles: vec![(vec![1], Site::ORIGIN)] }
}

/// Moves all particles at one site: a direction multinomial over the `2d`
/// neighbors, then the offspring total of each direction group.
pub(crate) fn scatter_site<R: RngCore>(
    n: u128,
    pmf: &crate::env::OffspringPmf,
    dim: usize,
    sampler: &mut Sampler<'_, R>,
    dirs: &mut [u128],
    mut emit: impl FnMut(usize, u128) -> Result<()>,
) -> Result<()> {
    if pmf.degenerate() == Some(0) {
        return Ok(());
    }
    sampler.directions(n, dim, dirs);
    for (dir, &g) in dirs.iter().enumerate().take(2 * dim) {
        if g == 0 {
            continue;
        }
        let children = sampler
            .offspring(g, pmf)
            .ok_or_else(|| Error::Overflow { t: 0, what: "offspring total".into() })?;
        if children > 0 {
            emit(dir, children)?;
        }
    }
    Ok(())
}

/// One aggregate step on a sparse state. Sites are processed in ascending
/// order, the same order the [`Grid`] engine uses, so both consume the
/// particle stream identically.
pub fn step_aggregate<R: RngCore>(
    state: &OccupancyState,
    field: &EnvironmentField,
    sampler: &mut Sampler<'_, R>,
) -> Result<OccupancyState> {
    let dim = state.dim;
    let t = state.t;
    let mut next: BTreeMap<Site, u128> = BTreeMap::new();
    let mut dirs = [0u128; 2 * crate::MAX_DIM];
    let mut total = 0u128;
    let slice = field.slice(t);
    for (x, &n) in &state.counts {
        let pmf = slice.pmf_at(x);
        scatter_site(n, pmf, dim, sampler, &mut dirs, |dir, children| {
            let overflow = || Error::Overflow { t: t + 1, what: format!("count at {:?}", x.step(dir)) };
            total = total.checked_add(children).ok_or_else(overflow)?;
            let slot = next.entry(x.step(dir)).or_insert(0);
            *slot = slot.checked_add(children).ok_or_else(overflow)?;
            Ok(())
        })
        .map_err(|e| retime(e, t + 1))?;
    }
    Ok(OccupancyState { t: t + 1, dim, counts: next })
}

pub(crate) fn retime(e: Error, t: u64) -> Error {
    match e {
        Error::Overflow { what, .. } => Error::Overflow { t, what },
        other => other,
    }
}
