//! Lattice sites, unit directions and multi-indices.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 8;

/// A point of `Z^d`. Coordinates past the dimension in use are always zero,
/// so sites of one dimension compare and hash consistently.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Site([i32; MAX_DIM]);

impl Site {
    pub const ORIGIN: Site = Site([0; MAX_DIM]);

    pub fn new(coords: &[i32]) -> Site {
        assert!(coords.len() <= MAX_DIM, "dimension {} exceeds MAX_DIM", coords.len());
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Site(c)
    }

    /// Coordinates beyond the dimension must be zero.
    #[inline]
    pub fn from_array(coords: [i32; MAX_DIM]) -> Site {
        Site(coords)
    }

    pub fn coords(&self, dim: usize) -> &[i32] {
        &self.0[..dim]
    }

    pub fn get(&self, axis: usize) -> i32 {
        self.0[axis]
    }

    pub fn l1(&self) -> u64 {
        self.0.iter().map(|c| c.unsigned_abs() as u64).sum()
    }

    /// Neighbor in direction `dir`, where directions `2i` and `2i+1` are `+e_i` and `-e_i`.
    pub fn step(&self, dir: usize) -> Site {
        let mut c = self.0;
        c[dir / 2] += if dir.is_multiple_of(2) { 1 } else { -1 };
        Site(c)
    }

    pub fn offset(&self, other: &Site) -> Site {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(other.0.iter()) {
            *a += *b;
        }
        Site(c)
    }

    /// First `dim` coordinates as floats.
    pub fn to_f64(&self, dim: usize) -> [f64; MAX_DIM] {
        let mut out = [0.0; MAX_DIM];
        for (o, &c) in out.iter_mut().zip(&self.0[..dim]) {
            *o = c as f64;
        }
        out
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let last = self.0.iter().rposition(|&c| c != 0).map_or(1, |i| i + 1);
        write!(f, "{:?}", &self.0[..last])
    }
}

/// Unit direction vector `dir` of `Z^d` (see [`Site::step`]).
pub fn unit(dir: usize) -> Site {
    Site::ORIGIN.step(dir)
}

/// Multi-index `n = (n_1, ..., n_d)` used for monomials `x^n`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    /// `k * e_axis` in dimension `dim`.
    pub fn axis(dim: usize, axis: usize, k: u32) -> Self {
        let mut v = vec![0; dim];
        v[axis] = k;
        MultiIndex(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&k| k == 0)
    }

    /// `x^n` at a lattice site.
    pub fn monomial(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .map(|(&k, &xi)| xi.powi(k as i32))
            .product()
    }

    /// Column-name fragment, e.g. `2_0_0`.
    pub fn tag(&self) -> String {
        self.0.iter().map(|k| k.to_string()).collect::<Vec<_>>().join("_")
    }

    /// Parses `2,0,0` or `2_0_0`.
    pub fn parse(s: &str) -> Option<MultiIndex> {
        let parts: Option<Vec<u32>> = s
            .split([',', '_'])
            .map(|p| p.trim().parse().ok())
            .collect();
        parts.filter(|p| !p.is_empty()).map(MultiIndex)
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// Every multi-index of dimension `dim` and total order `order`.
pub fn multi_indices_of_order(dim: usize, order: u32) -> Vec<MultiIndex> {
    fn rec(dim: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
        if cur.len() + 1 == dim {
            cur.push(left);
            out.push(MultiIndex(cur.clone()));
            cur.pop();
            return;
        }
        for k in (0..=left).rev() {
            cur.push(k);
            rec(dim, left - k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if dim == 0 {
        return out;
    }
    rec(dim, order, &mut Vec::with_capacity(dim), &mut out);
    out
}
