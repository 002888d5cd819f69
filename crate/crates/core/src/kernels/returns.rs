//! Return probability `pi_d` of the simple random walk.

use std::f64::consts::PI;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::prf::{derive_seed, domain};
use crate::{Error, Result, MAX_DIM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReturnMethod {
    ExactRecurrent,
    TruncatedGreen,
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnProbEstimate {
    pub d: usize,
    pub value: f64,
    pub half_width: f64,
    pub method: ReturnMethod,
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let (mut acc, mut comp) = (0.0f64, 0.0f64);
    out.push(0.0);
    for k in 1..=n {
        let y = (k as f64).ln() - comp;
        let next = acc + y;
        comp = (next - acc) - y;
        acc = next;
        out.push(acc);
    }
    out
}

/// `P(S_t = 0)` for the simple walk on `Z^d`, `t = 0..=horizon`.
///
/// The one-dimensional series `C(t, t/2) 2^{-t}` is convolved across axes:
/// a walk on `j + 1` axes spends a Binomial(t, j/(j+1)) number of its steps
/// on the first `j`. Binomial weights are summed over `mean ± 12 sd`.
pub fn return_series(d: usize, horizon: usize) -> Vec<f64> {
    assert!(d >= 1);
    let mut one = vec![0.0; horizon + 1];
    one[0] = 1.0;
    for t in (2..=horizon).step_by(2) {
        one[t] = one[t - 2] * (t - 1) as f64 / t as f64;
    }
    if d == 1 {
        return one;
    }
    let lnf = ln_factorials(horizon);
    let mut cur = one.clone();
    for j in 1..d {
        let p = j as f64 / (j + 1) as f64;
        let (lp, lq) = (p.ln(), (1.0 - p).ln());
        let mut next = vec![0.0; horizon + 1];
        next[0] = 1.0;
        for t in (2..=horizon).step_by(2) {
            let mean = t as f64 * p;
            let sd = (t as f64 * p * (1.0 - p)).sqrt();
            let lo = ((mean - 12.0 * sd - 2.0).floor().max(0.0)) as usize & !1;
            let hi = ((mean + 12.0 * sd + 2.0).ceil() as usize).min(t);
            let mut acc = 0.0;
            for s in (lo..=hi).step_by(2) {
                let lb = lnf[t] - lnf[s] - lnf[t - s] + s as f64 * lp + (t - s) as f64 * lq;
                acc += lb.exp() * cur[s] * one[t - s];
            }
            next[t] = acc;
        }
        cur = next;
    }
    cur
}

/// Local-CLT approximation `2 (d / (2 pi t))^{d/2}` of `P(S_t = 0)` at even `t`.
pub fn asymptotic_return(d: usize, t: f64) -> f64 {
    2.0 * (d as f64 / (2.0 * PI * t)).powf(d as f64 / 2.0)
}

/// `sum_{t > budget, t even}` of [`asymptotic_return`], for `d >= 3`.
pub fn local_clt_tail(d: usize, budget: usize) -> f64 {
    let s = d as f64 / 2.0;
    let n = (budget / 2 + 1) as f64;
    // sum_{k >= n} k^{-s} by Euler-Maclaurin
    let zeta_tail = n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s) + s / 12.0 * n.powf(-s - 1.0);
    2.0 * (d as f64 / (2.0 * PI)).powf(s) * 2f64.powf(-s) * zeta_tail
}

/// First-return probabilities from return probabilities by the renewal
/// identity `p_t = sum_{s=1..t} f_s p_{t-s}`.
pub fn first_return_series(returns: &[f64]) -> Vec<f64> {
    let mut f = vec![0.0; returns.len()];
    for t in 1..returns.len() {
        let conv: f64 = (1..t).map(|s| f[s] * returns[t - s]).sum();
        f[t] = returns[t] - conv;
    }
    f
}

fn recurrent(d: usize) -> ReturnProbEstimate {
    ReturnProbEstimate { d, value: 1.0, half_width: 0.0, method: ReturnMethod::ExactRecurrent }
}

fn check_args(d: usize, budget: usize) -> Result<()> {
    if d == 0 || d > MAX_DIM {
        return Err(Error::Domain(format!("dimension {d} outside 1..={MAX_DIM}")));
    }
    if budget < 2 {
        return Err(Error::Budget(format!("truncation horizon {budget} < 2")));
    }
    Ok(())
}

/// `pi_d = 1 - 1/G` with `G = sum_t P(S_t = 0)` summed exactly up to
/// `budget` plus the analytic local-CLT tail.
pub fn return_probability(d: usize, budget: usize) -> Result<ReturnProbEstimate> {
    check_args(d, budget)?;
    if d <= 2 {
        return Ok(recurrent(d));
    }
    let series = return_series(d, budget);
    let partial: f64 = series.iter().sum();
    let tail = local_clt_tail(d, budget);
    let green = partial + tail;
    let last = budget & !1;
    // relative deviation from the local CLT decays like 1/t past the budget
    let rel = (series[last] / asymptotic_return(d, last as f64) - 1.0).abs();
    let green_err = 2.0 * rel * tail + 1e-13 * green;
    Ok(ReturnProbEstimate {
        d,
        value: 1.0 - 1.0 / green,
        half_width: green_err / (green * green),
        method: ReturnMethod::TruncatedGreen,
    })
}

/// Monte Carlo estimate from `walks` independent walks of `length` steps.
/// The probability of a first return after `length` is added analytically
/// as `(1 - pi)^2` times the local-CLT tail.
pub fn return_probability_monte_carlo(
    d: usize,
    walks: u64,
    length: usize,
    seed: u64,
) -> Result<ReturnProbEstimate> {
    check_args(d, length)?;
    if walks == 0 {
        return Err(Error::Budget("need at least one walk".into()));
    }
    if d <= 2 {
        return Ok(recurrent(d));
    }
    const CHUNK: u64 = 4096;
    let chunks = walks.div_ceil(CHUNK);
    let returned: u64 = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, domain::MONTE_CARLO, chunk));
            let n = CHUNK.min(walks - chunk * CHUNK);
            let mut hits = 0u64;
            for _ in 0..n {
                if walk_returns(&mut rng, d, length) {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    let p = returned as f64 / walks as f64;
    let se = (p * (1.0 - p) / walks as f64).sqrt();
    let tail = (1.0 - p).powi(2) * local_clt_tail(d, length);
    Ok(ReturnProbEstimate {
        d,
        value: p + tail,
        half_width: 3.0 * se + 0.1 * tail,
        method: ReturnMethod::MonteCarlo,
    })
}

fn walk_returns(rng: &mut impl RngCore, d: usize, length: usize) -> bool {
    let mut x = [0i32; MAX_DIM];
    let mut l1: u32 = 0;
    let two_d = 2 * d as u64;
    for _ in 0..length {
        let dir = ((rng.next_u32() as u64 * two_d) >> 32) as usize;
        let axis = dir >> 1;
        let before = x[axis];
        let after = if dir & 1 == 0 { before + 1 } else { before - 1 };
        x[axis] = after;
        if after.unsigned_abs() > before.unsigned_abs() {
            l1 += 1;
        } else {
            l1 -= 1;
            if l1 == 0 {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{convolution_return_series, StepKernel};

    #[test]
    fn series_matches_dense_convolution() {
        for d in 1..=3 {
            let fast = return_series(d, 30);
            let slow = convolution_return_series(&StepKernel::simple(d), 30).unwrap();
            for t in 0..=30 {
                assert!((fast[t] - slow[t]).abs() < 1e-14, "d={d} t={t}");
            }
        }
    }

    #[test]
    fn two_dimensional_closed_form() {
        // P(S_2n = 0) = (C(2n, n) / 4^n)^2 in d = 2
        let s = return_series(2, 400);
        let one = return_series(1, 400);
        let mut c = 1.0f64;
        for n in 0..=200 {
            if n > 0 {
                c *= (2 * n - 1) as f64 / (2 * n) as f64;
            }
            assert!((one[2 * n] - c).abs() < 1e-12 * c, "n={n}");
            assert!((s[2 * n] - c * c).abs() < 1e-12 * c * c, "n={n}");
        }
    }

    #[test]
    fn recurrent_dimensions_short_circuit() {
        for d in [1, 2] {
            let est = return_probability(d, 100).unwrap();
            assert_eq!(est.value, 1.0);
            assert_eq!(est.method, ReturnMethod::ExactRecurrent);
        }
    }

    #[test]
    fn budget_error() {
        assert!(matches!(return_probability(3, 1), Err(Error::Budget(_))));
        assert!(matches!(return_probability(1, 0), Err(Error::Budget(_))));
    }

    #[test]
    fn pi3_at_budget_1e4() {
        let est = return_probability(3, 10_000).unwrap();
        assert!((est.value - 0.3405).abs() < 1e-3, "{est:?}");
        assert!(est.half_width < 1e-3);
        assert!(est.value > 0.0 && est.value < 1.0);
    }

    #[test]
    fn pi_decreases_with_dimension() {
        let p3 = return_probability(3, 4000).unwrap().value;
        let p4 = return_probability(4, 4000).unwrap().value;
        let p5 = return_probability(5, 4000).unwrap().value;
        assert!(p3 > p4 && p4 > p5 && p5 > 0.0);
        // known values: pi_4 = 0.19315, pi_5 = 0.13519
        assert!((p4 - 0.19315).abs() < 1e-3);
        assert!((p5 - 0.13519).abs() < 1e-3);
    }

    #[test]
    fn first_returns_sum_to_partial_return_probability() {
        let p = return_series(3, 2000);
        let f = first_return_series(&p);
        let partial: f64 = f.iter().sum();
        assert!(partial > 0.32 && partial < 0.3406);
        assert!(f.iter().all(|&x| x >= -1e-15));
    }

    #[test]
    fn monte_carlo_small_run_is_deterministic() {
        let a = return_probability_monte_carlo(3, 5000, 200, 9).unwrap();
        let b = return_probability_monte_carlo(3, 5000, 200, 9).unwrap();
        assert_eq!(a, b);
        assert!((a.value - 0.3405).abs() < a.half_width + 0.01);
    }
}
