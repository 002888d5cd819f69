//! Observables of a state: normalized population, densities, overlap, CLT
//! moment functionals and the polynomial martingales `Y_n`.

use std::collections::BTreeMap;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::kernels::{wn_coefficients, PolynomialWn};
use crate::rational::{self, Q};
use crate::sim::{OccupancyState, SiteCounts};
use crate::{MultiIndex, Result, Site, MAX_DIM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Alive,
    Extinct,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Alive => "Alive",
            Status::Extinct => "Extinct",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityStats {
    pub rho: BTreeMap<Site, f64>,
    pub rho_star: f64,
    pub r: f64,
    pub status: Status,
}

/// `rho_t(x) = N_{t,x} / N_t` on survival, all zero after extinction.
pub fn density_stats(state: &OccupancyState) -> DensityStats {
    let total = state.total();
    if total == 0 {
        return DensityStats { rho: BTreeMap::new(), rho_star: 0.0, r: 0.0, status: Status::Extinct };
    }
    let nf = total as f64;
    let rho: BTreeMap<Site, f64> = state.counts.iter().map(|(x, &c)| (*x, c as f64 / nf)).collect();
    let max = state.counts.values().copied().max().unwrap_or(0);
    let r = rho.values().map(|p| p * p).sum();
    DensityStats { rho, rho_star: max as f64 / nf, r, status: Status::Alive }
}

/// Exact densities; they sum to exactly one on survival.
pub fn densities_exact(state: &OccupancyState) -> BTreeMap<Site, Q> {
    let total = state.total();
    if total == 0 {
        return BTreeMap::new();
    }
    let den = num_bigint::BigInt::from(total);
    state
        .counts
        .iter()
        .map(|(x, &c)| (*x, Q::new(num_bigint::BigInt::from(c), den.clone())))
        .collect()
}

/// `m^{-t}`, formed once in log space.
pub fn normalizer(m: f64, t: u64) -> f64 {
    if t == 0 {
        1.0
    } else {
        (-(t as f64) * m.ln()).exp()
    }
}

fn scale(t: u64) -> f64 {
    if t == 0 {
        1.0
    } else {
        1.0 / (t as f64).sqrt()
    }
}

/// `sum_x (x / sqrt t)^n Nbar_{t,x}`.
pub fn clt_moment<S: SiteCounts>(state: &S, n: &MultiIndex, m: f64) -> f64 {
    let w = normalizer(m, state.time());
    if n.is_zero() {
        return state.total() as f64 * w;
    }
    let s = scale(state.time());
    let mut acc = 0.0;
    state.visit(|x, c| {
        let mut v = c as f64;
        for (xi, &k) in x.iter().zip(&n.0) {
            v *= (*xi as f64 * s).powi(k as i32);
        }
        acc += v;
    });
    acc * w
}

/// `Y_n(t) = sum_x W_n(t, x) Nbar_{t,x}`.
pub fn y_statistic<S: SiteCounts>(state: &S, poly: &PolynomialWn, m: f64) -> f64 {
    let w = normalizer(m, state.time());
    if poly.n().is_zero() {
        return state.total() as f64 * w;
    }
    let t = state.time() as f64;
    let mut acc = 0.0;
    let mut xf = [0.0; MAX_DIM];
    state.visit(|x, c| {
        for (dst, &src) in xf.iter_mut().zip(x) {
            *dst = src as f64;
        }
        acc += poly.eval(t, &xf[..x.len()]) * c as f64;
    });
    acc * w
}

/// `sum_x cos(omega . x / sqrt t) rho_t(x)`, the bounded test function check;
/// its limit on survival is `exp(-|omega|^2 / (2d))`.
pub fn cos_statistic<S: SiteCounts>(state: &S, omega: &[f64]) -> f64 {
    let total = state.total();
    if total == 0 {
        return 0.0;
    }
    let s = scale(state.time());
    let mut acc = 0.0;
    state.visit(|x, c| {
        let phase: f64 = x.iter().zip(omega).map(|(&xi, w)| xi as f64 * w * s).sum();
        acc += phase.cos() * c as f64;
    });
    acc / total as f64
}

/// `sum_x x^i N_{t,x} / m^t` in exact arithmetic.
pub fn raw_moment_exact(state: &OccupancyState, i: &[u32], m: &Q) -> Q {
    let mut acc = Q::zero();
    for (x, &c) in &state.counts {
        let mut v = Q::from_integer(c.into());
        for (xi, &k) in x.coords(state.dim).iter().zip(i) {
            v *= rational::pow(&rational::int(*xi as i64), k);
        }
        acc += v;
    }
    acc / rational::pow(m, state.t as u32)
}

/// Exact `Y_n(t)`, summed site by site.
pub fn y_statistic_exact(state: &OccupancyState, poly: &PolynomialWn, m: &Q) -> Q {
    let t = rational::int(state.t as i64);
    let mut acc = Q::zero();
    for (x, &c) in &state.counts {
        let xq: Vec<Q> = x.coords(state.dim).iter().map(|&v| rational::int(v as i64)).collect();
        acc += poly.eval_exact(&t, &xq) * Q::from_integer(c.into());
    }
    acc / rational::pow(m, state.t as u32)
}

/// Exact `Y_n(t)` assembled from moments: `sum_{i,j} A_n(i,j) t^j sum_x x^i Nbar_{t,x}`.
/// For `|n| = 2` this is `t (M_n + A_n(0,1) Nbar_t)`, with `M_n` the CLT moment.
pub fn y_from_moments_exact(state: &OccupancyState, poly: &PolynomialWn, m: &Q) -> Q {
    let t = rational::int(state.t as i64);
    poly.coeffs()
        .iter()
        .map(|((i, j), a)| a * rational::pow(&t, *j) * raw_moment_exact(state, i, m))
        .sum()
}

/// Floating counterpart of [`y_from_moments_exact`] minus [`y_statistic`].
pub fn decomposition_residual<S: SiteCounts>(state: &S, poly: &PolynomialWn, m: f64) -> f64 {
    let t = state.time() as f64;
    let via_moments: f64 = poly
        .coeffs()
        .iter()
        .map(|((i, j), a)| {
            let order: u32 = i.iter().sum();
            rational::to_f64(a) * t.powi(*j as i32) * t.powf(order as f64 / 2.0) * clt_moment(state, &MultiIndex(i.clone()), m)
        })
        .sum();
    y_statistic(state, poly, m) - via_moments
}

/// Which observables a run records.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StatSpec {
    #[serde(default)]
    pub moments: Vec<MultiIndex>,
    #[serde(default)]
    pub y: Vec<MultiIndex>,
    #[serde(default)]
    pub cos: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct PreparedStats {
    pub spec: StatSpec,
    pub polys: Vec<PolynomialWn>,
}

impl StatSpec {
    pub fn prepare(&self, dim: usize) -> Result<PreparedStats> {
        for n in self.moments.iter().chain(&self.y) {
            if n.dim() != dim {
                return Err(crate::Error::Config(format!("multi-index {} has dimension {} != {dim}", n.tag(), n.dim())));
            }
        }
        if let Some(w) = &self.cos {
            if w.len() != dim {
                return Err(crate::Error::Config(format!("cos frequency has {} entries, expected {dim}", w.len())));
            }
        }
        let polys = self.y.iter().map(|n| wn_coefficients(n, dim)).collect::<Result<Vec<_>>>()?;
        Ok(PreparedStats { spec: self.clone(), polys })
    }
}

impl PreparedStats {
    /// Names of [`StatRecord::values`], in order.
    pub fn names(&self) -> Vec<String> {
        let mut out: Vec<String> = ["Nbar", "Nbar_sq", "rho_star", "R"].iter().map(|s| s.to_string()).collect();
        for n in &self.spec.moments {
            out.push(format!("M_{}", n.tag()));
            out.push(format!("C_{}", n.tag()));
        }
        for n in &self.spec.y {
            out.push(format!("Y_{}", n.tag()));
            out.push(format!("Yabs_{}", n.tag()));
        }
        if self.spec.cos.is_some() {
            out.push("cos".into());
        }
        out
    }
}

/// Observables at one time. `moments[n]` is `sum_x (x/sqrt t)^n Nbar_{t,x}`
/// and `y_stats[n]` is `Y_n(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatRecord {
    pub t: u64,
    pub n_t: u128,
    pub nbar: f64,
    pub rho_star: f64,
    pub r_t: f64,
    pub moments: BTreeMap<MultiIndex, f64>,
    pub y_stats: BTreeMap<MultiIndex, f64>,
    pub cos: Option<f64>,
    pub status: Status,
}

pub fn compute_record<S: SiteCounts>(state: &S, m: f64, stats: &PreparedStats) -> StatRecord {
    let t = state.time();
    let total = state.total();
    let w = normalizer(m, t);
    let nbar = if total == 0 { 0.0 } else { total as f64 * w };
    let (mut max, mut sq) = (0u128, 0.0f64);
    state.visit(|_, c| {
        max = max.max(c);
        sq += (c as f64) * (c as f64);
    });
    let (rho_star, r_t) = if total == 0 {
        (0.0, 0.0)
    } else {
        let nf = total as f64;
        (max as f64 / nf, sq / (nf * nf))
    };
    let moments = stats.spec.moments.iter().map(|n| (n.clone(), clt_moment(state, n, m))).collect();
    let y_stats = stats
        .spec
        .y
        .iter()
        .zip(&stats.polys)
        .map(|(n, p)| (n.clone(), y_statistic(state, p, m)))
        .collect();
    let cos = stats.spec.cos.as_ref().map(|w| cos_statistic(state, w));
    StatRecord {
        t,
        n_t: total,
        nbar,
        rho_star,
        r_t,
        moments,
        y_stats,
        cos,
        status: if total == 0 { Status::Extinct } else { Status::Alive },
    }
}

impl StatRecord {
    /// The record of an extinct population at time `t`.
    pub fn extinct(t: u64, stats: &PreparedStats) -> StatRecord {
        StatRecord {
            t,
            n_t: 0,
            nbar: 0.0,
            rho_star: 0.0,
            r_t: 0.0,
            moments: stats.spec.moments.iter().map(|n| (n.clone(), 0.0)).collect(),
            y_stats: stats.spec.y.iter().map(|n| (n.clone(), 0.0)).collect(),
            cos: stats.spec.cos.as_ref().map(|_| 0.0),
            status: Status::Extinct,
        }
    }

    /// Values in the order of [`PreparedStats::names`]. `C_n` is the moment
    /// per particle, `sum_x (x/sqrt t)^n rho_t(x)`, and `Yabs_n` is
    /// `|t^{-|n|/2} Y_n(t)|`.
    pub fn values(&self, stats: &PreparedStats) -> Vec<f64> {
        let mut out = vec![self.nbar, self.nbar * self.nbar, self.rho_star, self.r_t];
        for n in &stats.spec.moments {
            let v = self.moments[n];
            out.push(v);
            out.push(if self.nbar > 0.0 { v / self.nbar } else { 0.0 });
        }
        let t = self.t.max(1) as f64;
        for n in &stats.spec.y {
            let v = self.y_stats[n];
            out.push(v);
            out.push((v * t.powf(-(n.order() as f64) / 2.0)).abs());
        }
        if let Some(c) = self.cos {
            out.push(c);
        }
        out
    }
}
