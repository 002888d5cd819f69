//! Genealogy-resolved stepping with replayable per-particle draws.

use std::collections::HashMap;

use crate::env::{EnvironmentField, OffspringPmf};
use crate::prf::{domain, Key};
use crate::{Error, Result, Site};

use super::GenealogyState;

pub const DEFAULT_GENEALOGY_CAP: usize = 100_000;

/// The particle draws `X_{t,x}^y` (direction) and `K_{t,x}^y` (children),
/// defined for every time, site and label whether or not the particle exists.
pub trait ParticleField: Sync {
    fn direction(&self, t: u64, x: &Site, label: &[u32], dim: usize) -> usize;
    fn child_count(&self, t: u64, x: &Site, label: &[u32], pmf: &OffspringPmf) -> u32;
}

/// Draws as a keyed hash of `(seed, t, x, label)`.
#[derive(Clone, Copy, Debug)]
pub struct KeyedParticles {
    pub seed: u64,
}

impl KeyedParticles {
    pub fn new(seed: u64) -> Self {
        KeyedParticles { seed }
    }

    fn key(&self, dom: u64, t: u64, x: &Site, label: &[u32]) -> Key {
        let mut key = Key::new(self.seed, dom).absorb(t);
        for axis in 0..crate::MAX_DIM {
            key = key.absorb_i64(x.get(axis) as i64);
        }
        key = key.absorb(label.len() as u64);
        for &l in label {
            key = key.absorb(l as u64);
        }
        key
    }
}

impl ParticleField for KeyedParticles {
    fn direction(&self, t: u64, x: &Site, label: &[u32], dim: usize) -> usize {
        self.key(domain::DIRECTION, t, x, label).below(2 * dim as u64) as usize
    }

    fn child_count(&self, t: u64, x: &Site, label: &[u32], pmf: &OffspringPmf) -> u32 {
        if let Some(k) = pmf.degenerate() {
            return k;
        }
        pmf.child_count(self.key(domain::OFFSPRING, t, x, label).unit())
    }
}

/// Fixed draws for tests: a default `(direction, children)` with per-label
/// overrides.
#[derive(Clone, Debug)]
pub struct ForcedDraws {
    pub direction: usize,
    pub children: u32,
    pub overrides: HashMap<Vec<u32>, (usize, u32)>,
}

impl ForcedDraws {
    pub fn constant(direction: usize, children: u32) -> Self {
        ForcedDraws { direction, children, overrides: HashMap::new() }
    }

    pub fn with(mut self, label: &[u32], direction: usize, children: u32) -> Self {
        self.overrides.insert(label.to_vec(), (direction, children));
        self
    }

    fn get(&self, label: &[u32]) -> (usize, u32) {
        self.overrides.get(label).copied().unwrap_or((self.direction, self.children))
    }
}

impl ParticleField for ForcedDraws {
    fn direction(&self, _t: u64, _x: &Site, label: &[u32], _dim: usize) -> usize {
        self.get(label).0
    }

    fn child_count(&self, _t: u64, _x: &Site, label: &[u32], _pmf: &OffspringPmf) -> u32 {
        self.get(label).1
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParticleDraw {
    pub label: Vec<u32>,
    pub site: Site,
    pub atom: usize,
    pub direction: usize,
    pub children: u32,
}

/// Draws of every particle of `state` for the step `t -> t + 1`.
pub fn genealogy_draws(
    state: &GenealogyState,
    field: &EnvironmentField,
    particles: &dyn ParticleField,
) -> Vec<ParticleDraw> {
    state
        .particles
        .iter()
        .map(|(label, x)| {
            let atom = field.atom_index(state.t, x);
            let pmf = &field.model().atoms()[atom].pmf;
            ParticleDraw {
                label: label.clone(),
                site: *x,
                atom,
                direction: particles.direction(state.t, x, label, state.dim),
                children: particles.child_count(state.t, x, label, pmf),
            }
        })
        .collect()
}

/// One genealogy step; children are labeled `1..=K` in birth order.
pub fn step_genealogy(
    state: &GenealogyState,
    field: &EnvironmentField,
    particles: &dyn ParticleField,
    cap: usize,
) -> Result<GenealogyState> {
    let mut next = Vec::new();
    for draw in genealogy_draws(state, field, particles) {
        if next.len() + draw.children as usize > cap {
            return Err(Error::Cap(format!("genealogy population exceeds {cap} at t={}", state.t + 1)));
        }
        let dest = draw.site.step(draw.direction);
        for k in 1..=draw.children {
            let mut label = draw.label.clone();
            label.push(k);
            next.push((label, dest));
        }
    }
    Ok(GenealogyState { t: state.t + 1, dim: state.dim, particles: next })
}
