//! Random-walk kernels, return probabilities and the space-time harmonic
//! polynomials of the simple walk.

mod poly;
mod returns;

pub use poly::{
    check_harmonicity, gaussian_moment, wn_coefficients, wn_coefficients_capped, PolyTerm,
    PolynomialWn, DEFAULT_ORDER_CAP,
};
pub use returns::{
    asymptotic_return, first_return_series, local_clt_tail, return_probability,
    return_probability_monte_carlo, return_series, ReturnMethod, ReturnProbEstimate,
};

use std::collections::{BTreeMap, HashMap};

use num_traits::Zero;

use crate::rational::{self, Q};
use crate::{Error, Result, Site};

/// A step law on `Z^d` with exact rational probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct StepKernel {
    dim: usize,
    entries: BTreeMap<Site, Q>,
}

impl StepKernel {
    pub fn new(dim: usize, entries: BTreeMap<Site, Q>) -> Self {
        StepKernel { dim, entries }
    }

    /// Uniform law on the `2d` unit vectors.
    pub fn simple(dim: usize) -> Self {
        let p = rational::frac(1, 2 * dim as i64);
        let entries = (0..2 * dim).map(|dir| (Site::ORIGIN.step(dir), p.clone())).collect();
        StepKernel { dim, entries }
    }

    /// Law of `xi - xi'` for two independent simple steps.
    pub fn difference(dim: usize) -> Self {
        let simple = Self::simple(dim);
        let mut entries: BTreeMap<Site, Q> = BTreeMap::new();
        for (a, pa) in &simple.entries {
            for (b, pb) in &simple.entries {
                let neg_b = Site::new(&b.coords(dim).iter().map(|c| -c).collect::<Vec<_>>());
                *entries.entry(a.offset(&neg_b)).or_insert_with(Q::zero) += pa * pb;
            }
        }
        StepKernel { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &BTreeMap<Site, Q> {
        &self.entries
    }

    pub fn prob(&self, e: &Site) -> Q {
        self.entries.get(e).cloned().unwrap_or_else(Q::zero)
    }

    pub fn total(&self) -> Q {
        self.entries.values().sum()
    }

    pub fn entries_f64(&self) -> Vec<(Site, f64)> {
        self.entries.iter().map(|(s, p)| (*s, rational::to_f64(p))).collect()
    }

    /// One convolution step of a sparse distribution.
    pub fn convolve(&self, dist: &HashMap<Site, f64>) -> HashMap<Site, f64> {
        let steps = self.entries_f64();
        let mut out = HashMap::with_capacity(dist.len() * 2);
        for (x, &w) in dist {
            for (e, p) in &steps {
                *out.entry(x.offset(e)).or_insert(0.0) += w * p;
            }
        }
        out
    }
}

/// `P(S_t = 0)` for `t = 0..=horizon` by iterated sparse convolution with
/// `kernel`, checking that total mass stays 1 at every step.
pub fn convolution_return_series(kernel: &StepKernel, horizon: usize) -> Result<Vec<f64>> {
    let mut dist = HashMap::from([(Site::ORIGIN, 1.0)]);
    let mut out = Vec::with_capacity(horizon + 1);
    out.push(1.0);
    for t in 1..=horizon {
        dist = kernel.convolve(&dist);
        let mass: f64 = dist.values().sum();
        if (mass - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("kernel convolution lost mass at t={t}: {mass}")));
        }
        out.push(dist.get(&Site::ORIGIN).copied().unwrap_or(0.0));
    }
    Ok(out)
}
