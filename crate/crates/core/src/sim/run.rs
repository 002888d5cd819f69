//! Trajectories and ensembles.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{EnvironmentField, EnvironmentModel};
use crate::prf::{derive_seed, domain};
use crate::stats::{compute_record, PreparedStats, StatRecord, StatSpec};
use crate::{Error, Result, MAX_DIM};

use super::{init_genealogy, step_genealogy, Grid, KeyedParticles, Sampler, SamplerConfig};
use super::{DEFAULT_CELL_CAP, DEFAULT_GENEALOGY_CAP};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Aggregate,
    Genealogy,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub dim: usize,
    pub horizon: i64,
    pub env: Arc<EnvironmentModel>,
    pub env_seed: u64,
    pub particle_seed: u64,
    pub mode: Mode,
    pub stats: StatSpec,
    pub sampler: SamplerConfig,
    pub cell_cap: usize,
    pub genealogy_cap: usize,
    /// Times at which records are emitted; all of `0..=horizon` when `None`.
    pub record_times: Option<Vec<u64>>,
}

impl RunConfig {
    pub fn new(dim: usize, horizon: i64, env: Arc<EnvironmentModel>) -> Self {
        RunConfig {
            dim,
            horizon,
            env,
            env_seed: 0,
            particle_seed: 0,
            mode: Mode::Aggregate,
            stats: StatSpec::default(),
            sampler: SamplerConfig::default(),
            cell_cap: DEFAULT_CELL_CAP,
            genealogy_cap: DEFAULT_GENEALOGY_CAP,
            record_times: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 0 {
            return Err(Error::Config(format!("horizon {} is negative", self.horizon)));
        }
        if !(1..=MAX_DIM).contains(&self.dim) {
            return Err(Error::Config(format!("dimension {} outside 1..={MAX_DIM}", self.dim)));
        }
        Ok(())
    }

    /// Sorted record times within the horizon.
    pub fn times(&self) -> Vec<u64> {
        let h = self.horizon.max(0) as u64;
        match &self.record_times {
            None => (0..=h).collect(),
            Some(ts) => ts.iter().copied().filter(|&t| t <= h).collect::<BTreeSet<_>>().into_iter().collect(),
        }
    }

    fn replica(&self, index: u64) -> RunConfig {
        let mut c = self.clone();
        c.env_seed = derive_seed(self.env_seed, domain::REPLICA_ENV, index);
        c.particle_seed = derive_seed(self.particle_seed, domain::REPLICA_PARTICLE, index);
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Survived,
    Extinct { t: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Records at the requested times, plus one at the extinction time.
    pub records: Vec<StatRecord>,
    pub status: RunStatus,
    pub approx_sampling: bool,
    pub final_total: u128,
}

/// Runs one trajectory to the horizon or to extinction.
pub fn run_trajectory(config: &RunConfig) -> Result<Trajectory> {
    config.validate()?;
    let stats = config.stats.prepare(config.dim)?;
    run_prepared(config, &stats)
}

fn run_prepared(config: &RunConfig, stats: &PreparedStats) -> Result<Trajectory> {
    let field = EnvironmentField::new(config.env.clone(), config.env_seed, config.dim);
    let m = config.env.m();
    let horizon = config.horizon as u64;
    let times: BTreeSet<u64> = config.times().into_iter().collect();
    let mut records = Vec::with_capacity(times.len());
    let mut status = RunStatus::Survived;
    let mut approx_sampling = false;
    let final_total;
    match config.mode {
        Mode::Aggregate => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.particle_seed);
            let mut sampler = Sampler::new(&mut rng, config.sampler);
            let mut grid = Grid::new(config.dim, config.cell_cap)?;
            if times.contains(&0) {
                records.push(compute_record(&grid, m, stats));
            }
            for t in 1..=horizon {
                grid.step(&field, &mut sampler)?;
                let extinct = grid.occupied() == 0;
                if extinct || times.contains(&t) {
                    records.push(compute_record(&grid, m, stats));
                }
                if extinct {
                    status = RunStatus::Extinct { t };
                    break;
                }
            }
            approx_sampling = sampler.approx_used();
            final_total = super::SiteCounts::total(&grid);
        }
        Mode::Genealogy => {
            let particles = KeyedParticles::new(config.particle_seed);
            let mut state = init_genealogy(config.dim);
            if times.contains(&0) {
                records.push(compute_record(&state.occupancy(), m, stats));
            }
            for t in 1..=horizon {
                state = step_genealogy(&state, &field, &particles, config.genealogy_cap)?;
                let extinct = state.particles.is_empty();
                if extinct || times.contains(&t) {
                    records.push(compute_record(&state.occupancy(), m, stats));
                }
                if extinct {
                    status = RunStatus::Extinct { t };
                    break;
                }
            }
            final_total = state.particles.len() as u128;
        }
    }
    Ok(Trajectory { records, status, approx_sampling, final_total })
}

/// One replica of an ensemble, reduced to its statistic values.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicaOutcome {
    pub index: u64,
    pub env_seed: u64,
    pub particle_seed: u64,
    pub status: std::result::Result<RunStatus, Error>,
    pub approx_sampling: bool,
    /// `values[k][j]`: statistic `j` at the `k`-th summary time.
    pub values: Vec<Vec<f64>>,
    pub alive: Vec<bool>,
}

impl ReplicaOutcome {
    pub fn survived(&self) -> bool {
        matches!(self.status, Ok(RunStatus::Survived))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub se: Vec<f64>,
    pub median: Vec<f64>,
    pub alive_mean: Vec<f64>,
    pub alive_se: Vec<f64>,
    pub alive_median: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub times: Vec<u64>,
    pub replicas: u64,
    pub completed: u64,
    pub failed: Vec<(u64, String)>,
    pub survival: Vec<f64>,
    pub alive: Vec<u64>,
    pub approx_sampling: bool,
    pub series: BTreeMap<String, SeriesSummary>,
}

#[derive(Clone, Debug)]
pub struct EnsembleResult {
    pub names: Vec<String>,
    pub summary: EnsembleSummary,
    pub replicas: Vec<ReplicaOutcome>,
}

impl EnsembleResult {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Independent replicas with per-replica seed pairs derived from the base
/// seeds; the merge is by replica index.
pub fn run_ensemble(config: &RunConfig, replicas: u64) -> Result<EnsembleResult> {
    config.validate()?;
    if replicas == 0 {
        return Err(Error::Config("replicas must be at least 1".into()));
    }
    let stats = config.stats.prepare(config.dim)?;
    let outcomes = run_replicas(config, &stats, 0..replicas);
    Ok(finish(config, &stats, outcomes))
}

/// Runs replicas `0, 1, 2, ...` in batches of `batch` until at least
/// `min_alive` are alive at the last record time or `max_replicas` have run.
/// The result equals [`run_ensemble`] over the replicas that ran.
pub fn run_ensemble_until_alive(
    config: &RunConfig,
    batch: u64,
    min_alive: u64,
    max_replicas: u64,
) -> Result<EnsembleResult> {
    config.validate()?;
    if batch == 0 || max_replicas == 0 {
        return Err(Error::Config("batch and replica limit must be at least 1".into()));
    }
    let stats = config.stats.prepare(config.dim)?;
    let mut outcomes: Vec<ReplicaOutcome> = Vec::new();
    let mut alive = 0u64;
    while alive < min_alive && (outcomes.len() as u64) < max_replicas {
        let start = outcomes.len() as u64;
        let end = (start + batch).min(max_replicas);
        let more = run_replicas(config, &stats, start..end);
        alive += more.iter().filter(|o| o.status.is_ok() && o.alive.last() == Some(&true)).count() as u64;
        outcomes.extend(more);
    }
    Ok(finish(config, &stats, outcomes))
}

fn run_replicas(config: &RunConfig, stats: &PreparedStats, range: std::ops::Range<u64>) -> Vec<ReplicaOutcome> {
    let times = config.times();
    range
        .into_par_iter()
        .map(|index| {
            let rc = config.replica(index);
            let mut out = ReplicaOutcome {
                index,
                env_seed: rc.env_seed,
                particle_seed: rc.particle_seed,
                status: Ok(RunStatus::Survived),
                approx_sampling: false,
                values: Vec::new(),
                alive: Vec::new(),
            };
            match run_prepared(&rc, stats) {
                Ok(traj) => {
                    let by_time: BTreeMap<u64, &StatRecord> = traj.records.iter().map(|r| (r.t, r)).collect();
                    for &t in &times {
                        let rec = match by_time.get(&t) {
                            Some(r) => (*r).clone(),
                            None => StatRecord::extinct(t, stats),
                        };
                        out.alive.push(rec.n_t > 0);
                        out.values.push(rec.values(stats));
                    }
                    out.status = Ok(traj.status);
                    out.approx_sampling = traj.approx_sampling;
                }
                Err(e) => out.status = Err(e),
            }
            out
        })
        .collect()
}

fn finish(config: &RunConfig, stats: &PreparedStats, outcomes: Vec<ReplicaOutcome>) -> EnsembleResult {
    let names = stats.names();
    let summary = summarize(&names, &config.times(), &outcomes);
    EnsembleResult { names, summary, replicas: outcomes }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var)
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn summarize(names: &[String], times: &[u64], outcomes: &[ReplicaOutcome]) -> EnsembleSummary {
    let ok: Vec<&ReplicaOutcome> = outcomes.iter().filter(|o| o.status.is_ok()).collect();
    let failed = outcomes
        .iter()
        .filter_map(|o| o.status.as_ref().err().map(|e| (o.index, e.to_string())))
        .collect();
    let mut series: BTreeMap<String, SeriesSummary> = names.iter().map(|n| (n.clone(), SeriesSummary::default())).collect();
    let mut survival = Vec::new();
    let mut alive_counts = Vec::new();
    for k in 0..times.len() {
        let alive: Vec<&&ReplicaOutcome> = ok.iter().filter(|o| o.alive[k]).collect();
        alive_counts.push(alive.len() as u64);
        survival.push(if ok.is_empty() { f64::NAN } else { alive.len() as f64 / ok.len() as f64 });
        for (j, name) in names.iter().enumerate() {
            let all: Vec<f64> = ok.iter().map(|o| o.values[k][j]).collect();
            let live: Vec<f64> = alive.iter().map(|o| o.values[k][j]).collect();
            let (mean, var) = mean_var(&all);
            let (amean, avar) = mean_var(&live);
            let s = series.get_mut(name).expect("name");
            s.mean.push(mean);
            s.var.push(var);
            s.se.push((var / all.len() as f64).sqrt());
            s.median.push(median(&all));
            s.alive_mean.push(amean);
            s.alive_se.push((avar / live.len() as f64).sqrt());
            s.alive_median.push(median(&live));
        }
    }
    EnsembleSummary {
        times: times.to_vec(),
        replicas: outcomes.len() as u64,
        completed: ok.len() as u64,
        failed,
        survival,
        alive: alive_counts,
        approx_sampling: ok.iter().any(|o| o.approx_sampling),
        series,
    }
}
