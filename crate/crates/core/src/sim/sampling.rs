//! Binomial and multinomial draws used by the aggregate engine.

use rand::{Rng, RngCore};
use rand_distr::{Binomial, Distribution, StandardNormal};

use crate::env::OffspringPmf;

/// Counts at or below this are split one particle at a time.
pub const SMALL_COUNT: u128 = 12;
/// Binomials with `n` above this use the normal approximation.
pub const DEFAULT_EXACT_THRESHOLD: u128 = 1_000_000;
const POPCOUNT_LIMIT: u128 = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplerConfig {
    pub exact_threshold: u128,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { exact_threshold: DEFAULT_EXACT_THRESHOLD }
    }
}

pub struct Sampler<'a, R: RngCore> {
    rng: &'a mut R,
    cfg: SamplerConfig,
    approx_used: bool,
}

impl<'a, R: RngCore> Sampler<'a, R> {
    pub fn new(rng: &'a mut R, cfg: SamplerConfig) -> Self {
        Sampler { rng, cfg, approx_used: false }
    }

    /// Whether any draw so far used the normal approximation.
    pub fn approx_used(&self) -> bool {
        self.approx_used
    }

    pub fn binomial(&mut self, n: u128, p: f64) -> u128 {
        if n == 0 || p <= 0.0 {
            return 0;
        }
        if p >= 1.0 {
            return n;
        }
        if n > self.cfg.exact_threshold {
            self.approx_used = true;
            let z: f64 = self.rng.sample(StandardNormal);
            if n < 1 << 62 {
                let n = n as i64;
                let nf = n as f64;
                let x = (nf * p + (nf * p * (1.0 - p)).sqrt() * z).round() as i64;
                return x.clamp(0, n) as u128;
            }
            let nf = n as f64;
            let x = (nf * p + (nf * p * (1.0 - p)).sqrt() * z).round();
            return if x <= 0.0 { 0 } else { (x as u128).min(n) };
        }
        if p == 0.5 && n <= POPCOUNT_LIMIT {
            return self.half(n as u32);
        }
        if n <= SMALL_COUNT {
            return (0..n).filter(|_| self.rng.random::<f64>() < p).count() as u128;
        }
        Binomial::new(n as u64, p).expect("valid binomial").sample(self.rng) as u128
    }

    fn half(&mut self, n: u32) -> u128 {
        let mut count = 0u32;
        for _ in 0..n / 64 {
            count += self.rng.next_u64().count_ones();
        }
        let rest = n % 64;
        if rest > 0 {
            count += (self.rng.next_u64() & ((1u64 << rest) - 1)).count_ones();
        }
        count as u128
    }

    /// Uniform multinomial of `n` over the `2d` lattice directions: axis
    /// first, then sign.
    pub fn directions(&mut self, n: u128, dim: usize, out: &mut [u128]) {
        out[..2 * dim].fill(0);
        if n <= SMALL_COUNT {
            let k = 2 * dim;
            for _ in 0..n {
                out[self.rng.random_range(0..k)] += 1;
            }
            return;
        }
        let mut rest = n;
        for axis in 0..dim {
            let on_axis = if axis + 1 == dim { rest } else { self.binomial(rest, 1.0 / (dim - axis) as f64) };
            rest -= on_axis;
            let plus = self.binomial(on_axis, 0.5);
            out[2 * axis] = plus;
            out[2 * axis + 1] = on_axis - plus;
        }
    }

    /// Total children of `n` particles drawing independently from `pmf`,
    /// or `None` on overflow.
    pub fn offspring(&mut self, n: u128, pmf: &OffspringPmf) -> Option<u128> {
        if let Some(k) = pmf.degenerate() {
            return n.checked_mul(k as u128);
        }
        if n <= SMALL_COUNT {
            let mut total = 0u128;
            for _ in 0..n {
                total += pmf.child_count(self.rng.random::<f64>()) as u128;
            }
            return Some(total);
        }
        let support = pmf.support();
        let mut rest = n;
        let mut mass = 1.0f64;
        let mut total = 0u128;
        for (idx, &(k, p)) in support.iter().enumerate() {
            if rest == 0 {
                break;
            }
            let c = if idx + 1 == support.len() { rest } else { self.binomial(rest, (p / mass).min(1.0)) };
            rest -= c;
            mass -= p;
            total = total.checked_add(c.checked_mul(k as u128)?)?;
        }
        Some(total)
    }

    pub fn unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}
