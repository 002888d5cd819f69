//! Annealed second moment through the difference walk of two particles.
//!
//! Two particles sampled along the genealogy share their path until they
//! split; after the split their difference `D` is a walk with kernel
//! `xi - xi'` that picks up a factor `alpha` each time it leaves `0`. With
//! `u_s = E[alpha^{#departures from 0 in [0, s-1]}]`, `v_s` the same
//! expectation on `{D_s = 0}`, and injection mass `c m^{-(k-1)}` at split
//! time `k`:
//!
//! `E[Nbar_t^2] = m^{-t} + c sum_{k=1..t} m^{-(k-1)} u_{t-k}`,
//! `E[sum_x Nbar_{t,x}^2] = m^{-t} + c sum_{k=1..t} m^{-(k-1)} v_{t-k}`.

use std::collections::{BTreeMap, HashMap};

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::env::EnvironmentModel;
use crate::kernels::StepKernel;
use crate::rational::{self, Q};
use crate::{Error, Result, Site, MAX_DIM};

pub const DEFAULT_DP_RADIUS: usize = 160;
pub const DEFAULT_DP_CELL_CAP: usize = 20_000_000;

/// Neumaier-compensated sum.
#[derive(Clone, Copy, Default)]
struct Sum {
    s: f64,
    c: f64,
}

impl Sum {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    fn value(&self) -> f64 {
        self.s + self.c
    }
}

/// Weights of the difference walk on `|D|_1 <= radius`, stored on the
/// nonnegative orthant (the array is sign symmetric) in order of increasing
/// L1 norm. One step is two simple-walk half steps.
#[derive(Clone, Debug)]
pub struct DifferenceDp {
    dim: usize,
    alpha: f64,
    radius: usize,
    cells: Vec<[u16; MAX_DIM]>,
    shell_start: Vec<usize>,
    neighbors: Vec<u32>,
    mult: Vec<f64>,
    escape: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    support: usize,
    steps: usize,
    truncated: f64,
}

fn compositions(d: usize, r: usize, prefix: &mut Vec<u16>, out: &mut Vec<[u16; MAX_DIM]>) {
    if prefix.len() + 1 == d {
        let mut c = [0u16; MAX_DIM];
        c[..prefix.len()].copy_from_slice(prefix);
        c[d - 1] = r as u16;
        out.push(c);
        return;
    }
    for first in (0..=r).rev() {
        prefix.push(first as u16);
        compositions(d, r - first, prefix, out);
        prefix.pop();
    }
}

fn binomial(n: usize, k: usize) -> Option<usize> {
    (0..k).try_fold(1usize, |acc, i| acc.checked_mul(n - i).map(|v| v / (i + 1)))
}

impl DifferenceDp {
    pub fn new(alpha: f64, dim: usize, radius: usize, cell_cap: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) || radius > u16::MAX as usize {
            return Err(Error::Domain(format!("unsupported dimension {dim} or radius {radius}")));
        }
        let count = binomial(radius + dim, dim).filter(|&n| n <= cell_cap).ok_or_else(|| {
            Error::Cap(format!("difference walk ball of radius {radius} in d={dim} exceeds {cell_cap} cells"))
        })?;
        let mut cells = Vec::with_capacity(count);
        let mut shell_start = Vec::with_capacity(radius + 2);
        for r in 0..=radius {
            shell_start.push(cells.len());
            compositions(dim, r, &mut Vec::new(), &mut cells);
        }
        shell_start.push(cells.len());
        let index: HashMap<[u16; MAX_DIM], u32> = cells.iter().enumerate().map(|(i, c)| (*c, i as u32)).collect();
        let zero = cells.len() as u32;
        let mut neighbors = Vec::with_capacity(cells.len() * 2 * dim);
        let mut mult = Vec::with_capacity(cells.len());
        let mut escape = Vec::with_capacity(cells.len());
        for c in &cells {
            let l1: usize = c[..dim].iter().map(|&v| v as usize).sum();
            let zeros = c[..dim].iter().filter(|&&v| v == 0).count();
            for axis in 0..dim {
                let mut up = *c;
                up[axis] += 1;
                let up_idx = if l1 < radius { index[&up] } else { zero };
                let down_idx = if c[axis] == 0 {
                    up_idx
                } else {
                    let mut down = *c;
                    down[axis] -= 1;
                    index[&down]
                };
                neighbors.push(up_idx);
                neighbors.push(down_idx);
            }
            let m = (1u64 << (dim - zeros)) as f64;
            mult.push(m);
            escape.push(if l1 == radius { m * (dim + zeros) as f64 / (2 * dim) as f64 } else { 0.0 });
        }
        let mut f = vec![0.0; cells.len() + 1];
        f[0] = 1.0;
        let g = vec![0.0; cells.len() + 1];
        Ok(DifferenceDp {
            dim,
            alpha,
            radius,
            cells,
            shell_start,
            neighbors,
            mult,
            escape,
            f,
            g,
            support: 0,
            steps: 0,
            truncated: 0.0,
        })
    }

    fn half_step(&mut self) {
        if self.support == self.radius {
            let mut lost = Sum::default();
            for j in self.shell_start[self.radius]..self.shell_start[self.radius + 1] {
                lost.add(self.f[j] * self.escape[j]);
            }
            self.truncated += lost.value();
        }
        let next_support = (self.support + 1).min(self.radius);
        let active = self.shell_start[next_support + 1];
        let k = 2 * self.dim;
        let inv = 1.0 / k as f64;
        let (f, g, nb) = (&self.f, &mut self.g, &self.neighbors);
        for j in 0..active {
            let row = &nb[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for &i in row {
                acc += f[i as usize];
            }
            g[j] = acc * inv;
        }
        std::mem::swap(&mut self.f, &mut self.g);
        self.support = next_support;
    }

    /// Advances `s -> s + 1`: weight the origin by `alpha`, then move.
    pub fn step(&mut self) {
        self.f[0] *= self.alpha;
        self.half_step();
        self.half_step();
        self.steps += 1;
    }

    pub fn time(&self) -> usize {
        self.steps
    }

    /// `u_s`, the total weight.
    pub fn mass(&self) -> f64 {
        let end = self.shell_start[self.support + 1];
        let mut sum = Sum::default();
        for j in 0..end {
            sum.add(self.f[j] * self.mult[j]);
        }
        sum.value()
    }

    /// `v_s`, the weight at the origin.
    pub fn at_origin(&self) -> f64 {
        self.f[0]
    }

    /// Weight that has left the ball so far.
    pub fn truncated_mass(&self) -> f64 {
        self.truncated
    }

    /// The weight array over all of `Z^d`.
    pub fn weights(&self) -> BTreeMap<Site, f64> {
        let mut out = BTreeMap::new();
        let end = self.shell_start[self.support + 1];
        for (c, &w) in self.cells[..end].iter().zip(&self.f) {
            if w == 0.0 {
                continue;
            }
            let nz: Vec<usize> = (0..self.dim).filter(|&a| c[a] != 0).collect();
            for signs in 0..1u32 << nz.len() {
                let mut x = [0i32; MAX_DIM];
                for a in 0..self.dim {
                    x[a] = c[a] as i32;
                }
                for (b, &a) in nz.iter().enumerate() {
                    if signs >> b & 1 == 1 {
                        x[a] = -x[a];
                    }
                }
                out.insert(Site::new(&x[..self.dim]), w);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoWalkSeries {
    pub horizon: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub overlap: Vec<f64>,
    pub alpha: f64,
    pub c: f64,
    pub m: f64,
    pub radius: usize,
    pub truncated_mass: f64,
}

fn assemble(series: &[f64], m: f64, c: f64, t: usize) -> f64 {
    let mut sum = Sum::default();
    sum.add(m.powi(-(t as i32)));
    let mut scale = c;
    for k in 1..=t {
        sum.add(scale * series[t - k]);
        scale /= m;
    }
    sum.value()
}

/// The series up to `horizon` with the DP ball radius `min(2T, 160)`.
pub fn two_walk_series(model: &EnvironmentModel, d: usize, horizon: usize) -> Result<TwoWalkSeries> {
    two_walk_series_with_radius(model, d, horizon, (2 * horizon).min(DEFAULT_DP_RADIUS), DEFAULT_DP_CELL_CAP)
}

pub fn two_walk_series_with_radius(
    model: &EnvironmentModel,
    d: usize,
    horizon: usize,
    radius: usize,
    cell_cap: usize,
) -> Result<TwoWalkSeries> {
    let mo = model.moments();
    if mo.m <= 0.0 {
        return Err(Error::Domain("mean offspring must be positive".into()));
    }
    let mut dp = DifferenceDp::new(mo.alpha, d, radius.max(1), cell_cap)?;
    let mut u = vec![1.0];
    let mut v = vec![1.0];
    for _ in 0..horizon {
        dp.step();
        u.push(dp.mass());
        v.push(dp.at_origin());
    }
    let second_moment = (0..=horizon).map(|t| assemble(&u, mo.m, mo.c, t)).collect();
    let overlap = (0..=horizon).map(|t| assemble(&v, mo.m, mo.c, t)).collect();
    Ok(TwoWalkSeries {
        horizon,
        u,
        v,
        second_moment,
        overlap,
        alpha: mo.alpha,
        c: mo.c,
        m: mo.m,
        radius: radius.max(1),
        truncated_mass: dp.truncated_mass(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoWalkSeriesExact {
    pub u: Vec<Q>,
    pub v: Vec<Q>,
    pub second_moment: Vec<Q>,
    pub overlap: Vec<Q>,
}

fn assemble_exact(series: &[Q], m: &Q, c: &Q, t: usize) -> Q {
    let mut total = Q::one() / rational::pow(m, t as u32);
    let mut scale = c.clone();
    for k in 1..=t {
        total += &scale * &series[t - k];
        scale /= m;
    }
    total
}

/// Exact rational series on the full lattice with the difference kernel.
pub fn two_walk_series_exact(model: &EnvironmentModel, d: usize, horizon: usize) -> TwoWalkSeriesExact {
    let ex = model.exact_moments();
    let kernel = StepKernel::difference(d);
    let mut f: HashMap<Site, Q> = HashMap::from([(Site::ORIGIN, Q::one())]);
    let mut u = vec![Q::one()];
    let mut v = vec![Q::one()];
    for _ in 0..horizon {
        if let Some(w) = f.get_mut(&Site::ORIGIN) {
            *w *= &ex.alpha;
        }
        let mut next: HashMap<Site, Q> = HashMap::new();
        for (x, w) in &f {
            for (e, p) in kernel.entries() {
                *next.entry(x.offset(e)).or_insert_with(Q::zero) += w * p;
            }
        }
        f = next;
        u.push(f.values().sum());
        v.push(f.get(&Site::ORIGIN).cloned().unwrap_or_else(Q::zero));
    }
    let second_moment = (0..=horizon).map(|t| assemble_exact(&u, &ex.m, &ex.c, t)).collect();
    let overlap = (0..=horizon).map(|t| assemble_exact(&v, &ex.m, &ex.c, t)).collect();
    TwoWalkSeriesExact { u, v, second_moment, overlap }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::preset;

    #[test]
    fn env_b_first_terms() {
        let env = preset("env-b").unwrap();
        let s = two_walk_series(&env, 3, 10).unwrap();
        assert!((s.u[1] - 5.0 / 3.0).abs() < 1e-15);
        assert!((s.second_moment[1] - 5.0 / 3.0).abs() < 1e-15);
        assert!((s.second_moment[2] - 5.76 / 2.0736).abs() < 1e-14);
        let ex = two_walk_series_exact(&env, 3, 2);
        assert_eq!(ex.second_moment[1], rational::frac(5, 3));
        assert_eq!(ex.second_moment[2], rational::frac(25, 9));
    }

    #[test]
    fn overlap_matches_enumeration() {
        for name in ["env-a", "env-b"] {
            let env = preset(name).unwrap();
            let ex = two_walk_series_exact(&env, 2, 2);
            let m4 = rational::pow(&env.exact_moments().m, 4);
            let brute = crate::oracle::brute_force_overlap(&env, 2, 2).unwrap();
            assert_eq!(ex.overlap[2], brute / m4, "{name}");
        }
    }

    #[test]
    fn orthant_dp_matches_full_lattice_dp() {
        for name in ["env-a", "env-b"] {
            let env = preset(name).unwrap();
            for d in 1..=4 {
                let fast = two_walk_series(&env, d, 8).unwrap();
                let exact = two_walk_series_exact(&env, d, 8);
                for t in 0..=8 {
                    let (a, b) = (fast.u[t], rational::to_f64(&exact.u[t]));
                    assert!((a - b).abs() < 1e-13 * b, "{name} d={d} t={t}");
                    let (a, b) = (fast.overlap[t], rational::to_f64(&exact.overlap[t]));
                    assert!((a - b).abs() < 1e-13 * b);
                }
                assert_eq!(fast.truncated_mass, 0.0);
            }
        }
    }

    #[test]
    fn weights_are_symmetric() {
        let mut dp = DifferenceDp::new(1.7, 3, 12, DEFAULT_DP_CELL_CAP).unwrap();
        for _ in 0..5 {
            dp.step();
            let w = dp.weights();
            for (x, &v) in &w {
                let c = x.coords(3);
                for perm in [[1, 0, 2], [2, 1, 0], [0, 2, 1], [1, 2, 0]] {
                    let y = Site::new(&[c[perm[0]], c[perm[1]], c[perm[2]]]);
                    assert!((w[&y] - v).abs() <= 1e-15 * v);
                }
                let flipped = Site::new(&[-c[0], c[1], -c[2]]);
                assert_eq!(w[&flipped], v);
            }
        }
    }

    #[test]
    fn unit_alpha_preserves_mass() {
        let mut dp = DifferenceDp::new(1.0, 3, 40, DEFAULT_DP_CELL_CAP).unwrap();
        for _ in 0..20 {
            dp.step();
            assert!((dp.mass() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn truncation_is_accounted() {
        let mut dp = DifferenceDp::new(1.0, 2, 6, DEFAULT_DP_CELL_CAP).unwrap();
        for _ in 0..30 {
            dp.step();
            assert!((dp.mass() + dp.truncated_mass() - 1.0).abs() < 1e-12);
        }
        assert!(dp.truncated_mass() > 0.1);
    }

    #[test]
    fn cell_cap() {
        assert!(matches!(DifferenceDp::new(1.0, 6, 160, DEFAULT_DP_CELL_CAP), Err(Error::Cap(_))));
    }
}
