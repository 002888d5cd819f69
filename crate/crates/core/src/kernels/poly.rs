//! Space-time harmonic polynomials
//! `W_n(t, x) = (d/dtheta)^n exp(theta.x - t rho(theta))|_{theta=0}`
//! of the simple walk, `rho(theta) = ln((1/d) sum_i cosh theta_i)`.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::StepKernel;
use crate::rational::{self, Q};
use crate::{Error, MultiIndex, Result, Site};

pub const DEFAULT_ORDER_CAP: u32 = 8;

/// Monomial `x^i t^j`.
type Mono = (Vec<u32>, u32);
/// Polynomial in `(x, t)`.
type Poly = BTreeMap<Mono, Q>;
/// Truncated power series in `theta`, exponents bounded componentwise by `n`.
type Series<C> = BTreeMap<Vec<u32>, C>;

/// One serialized term `A_n(i, j) x^i t^j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolyTerm {
    pub i: Vec<u32>,
    pub j: u32,
    pub num: i64,
    pub den: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialWn {
    n: MultiIndex,
    coeffs: BTreeMap<Mono, Q>,
    float_terms: Vec<(Vec<u32>, u32, f64)>,
}

impl PolynomialWn {
    pub fn from_coeffs(n: MultiIndex, coeffs: BTreeMap<(Vec<u32>, u32), Q>) -> Self {
        let coeffs: BTreeMap<Mono, Q> = coeffs.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        let float_terms = coeffs
            .iter()
            .map(|((i, j), c)| (i.clone(), *j, rational::to_f64(c)))
            .collect();
        PolynomialWn { n, coeffs, float_terms }
    }

    pub fn n(&self) -> &MultiIndex {
        &self.n
    }

    pub fn dim(&self) -> usize {
        self.n.dim()
    }

    /// `A_n(i, j)` (zero when absent).
    pub fn coeff(&self, i: &[u32], j: u32) -> Q {
        self.coeffs.get(&(i.to_vec(), j)).cloned().unwrap_or_else(Q::zero)
    }

    pub fn coeffs(&self) -> &BTreeMap<(Vec<u32>, u32), Q> {
        &self.coeffs
    }

    pub fn eval_exact(&self, t: &Q, x: &[Q]) -> Q {
        self.coeffs
            .iter()
            .map(|((i, j), c)| {
                let mut term = c * rational::pow(t, *j);
                for (xi, &k) in x.iter().zip(i) {
                    term *= rational::pow(xi, k);
                }
                term
            })
            .sum()
    }

    #[inline]
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        self.float_terms
            .iter()
            .map(|(i, j, c)| {
                let mut v = c * t.powi(*j as i32);
                for (xi, &k) in x.iter().zip(i) {
                    v *= xi.powi(k as i32);
                }
                v
            })
            .sum()
    }

    pub fn to_terms(&self) -> Result<Vec<PolyTerm>> {
        self.coeffs
            .iter()
            .map(|((i, j), c)| {
                let num = c.numer().to_i64();
                let den = c.denom().to_i64();
                match (num, den) {
                    (Some(num), Some(den)) => Ok(PolyTerm { i: i.clone(), j: *j, num, den }),
                    _ => Err(Error::Cap(format!("coefficient {c} does not fit in i64"))),
                }
            })
            .collect()
    }

    pub fn from_terms(n: MultiIndex, terms: &[PolyTerm]) -> Result<Self> {
        let mut coeffs = BTreeMap::new();
        for term in terms {
            if term.den == 0 || term.i.len() != n.dim() {
                return Err(Error::Domain(format!("malformed term {term:?}")));
            }
            let q = Q::new(BigInt::from(term.num), BigInt::from(term.den));
            *coeffs.entry((term.i.clone(), term.j)).or_insert_with(Q::zero) += q;
        }
        Ok(Self::from_coeffs(n, coeffs))
    }
}

fn fits(e: &[u32], n: &[u32]) -> bool {
    e.iter().zip(n).all(|(a, b)| a <= b)
}

fn add_exps(a: &[u32], b: &[u32]) -> Vec<u32> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = Poly::new();
    for ((ia, ja), ca) in a {
        for ((ib, jb), cb) in b {
            *out.entry((add_exps(ia, ib), ja + jb)).or_insert_with(Q::zero) += ca * cb;
        }
    }
    out.retain(|_, c| !c.is_zero());
    out
}

fn series_mul_scalar(a: &Series<Q>, b: &Series<Q>, n: &[u32]) -> Series<Q> {
    let mut out = Series::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let e = add_exps(ea, eb);
            if fits(&e, n) {
                *out.entry(e).or_insert_with(Q::zero) += ca * cb;
            }
        }
    }
    out.retain(|_, c| !c.is_zero());
    out
}

fn series_mul_poly(a: &Series<Poly>, b: &Series<Poly>, n: &[u32]) -> Series<Poly> {
    let mut out: Series<Poly> = Series::new();
    for (ea, pa) in a {
        for (eb, pb) in b {
            let e = add_exps(ea, eb);
            if fits(&e, n) {
                let prod = poly_mul(pa, pb);
                let slot = out.entry(e).or_default();
                for (mono, c) in prod {
                    *slot.entry(mono).or_insert_with(Q::zero) += c;
                }
            }
        }
    }
    for p in out.values_mut() {
        p.retain(|_, c| !c.is_zero());
    }
    out.retain(|_, p| !p.is_empty());
    out
}

fn factorial(k: u32) -> BigInt {
    (1..=k).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

/// Taylor series of `rho(theta)` truncated to exponents `<= n`.
fn cumulant_series(d: usize, n: &[u32]) -> Series<Q> {
    // u = (1/d) sum_i (cosh theta_i - 1)
    let mut u = Series::new();
    for axis in 0..d {
        let mut k = 2;
        while k <= n[axis] {
            let mut e = vec![0; d];
            e[axis] = k;
            u.insert(e, Q::new(BigInt::one(), factorial(k) * BigInt::from(d)));
            k += 2;
        }
    }
    // ln(1 + u) = sum_j (-1)^{j+1} u^j / j
    let order: u32 = n.iter().sum();
    let mut rho = Series::new();
    let mut power = u.clone();
    let mut j = 1i64;
    while !power.is_empty() && 2 * j as u32 <= order {
        let sign = if j % 2 == 1 { Q::one() } else { -Q::one() };
        for (e, c) in &power {
            *rho.entry(e.clone()).or_insert_with(Q::zero) += c * &sign / rational::int(j);
        }
        power = series_mul_scalar(&power, &u, n);
        j += 1;
    }
    rho.retain(|_, c| !c.is_zero());
    rho
}

/// Exact coefficients `A_n(i, j)` of `W_n` for the simple walk on `Z^d`,
/// with `|n| <= DEFAULT_ORDER_CAP`.
pub fn wn_coefficients(n: &MultiIndex, d: usize) -> Result<PolynomialWn> {
    wn_coefficients_capped(n, d, DEFAULT_ORDER_CAP)
}

pub fn wn_coefficients_capped(n: &MultiIndex, d: usize, cap: u32) -> Result<PolynomialWn> {
    if n.dim() != d {
        return Err(Error::Domain(format!("multi-index {n:?} has dimension {} != {d}", n.dim())));
    }
    let order = n.order();
    if order > cap {
        return Err(Error::Cap(format!("|n| = {order} exceeds the order cap {cap}")));
    }
    let nv = &n.0;
    // g(theta) = theta.x - t rho(theta)
    let mut g: Series<Poly> = Series::new();
    for axis in 0..d {
        if nv[axis] >= 1 {
            let mut e = vec![0; d];
            e[axis] = 1;
            let mut xi = vec![0; d];
            xi[axis] = 1;
            g.insert(e, Poly::from([((xi, 0), Q::one())]));
        }
    }
    for (e, c) in cumulant_series(d, nv) {
        g.entry(e).or_default().insert((vec![0; d], 1), -c);
    }
    // exp(g) = sum_k g^k / k!; g has no constant term so k <= |n|
    let zero = vec![0; d];
    let mut exp_g: Series<Poly> = Series::from([(zero.clone(), Poly::from([((zero.clone(), 0), Q::one())]))]);
    let mut power: Series<Poly> = exp_g.clone();
    for k in 1..=order {
        power = series_mul_poly(&power, &g, nv);
        let inv = Q::new(BigInt::one(), factorial(k));
        for (e, p) in &power {
            let slot = exp_g.entry(e.clone()).or_default();
            for (mono, c) in p {
                *slot.entry(mono.clone()).or_insert_with(Q::zero) += c * &inv;
            }
        }
    }
    let n_fact = nv.iter().fold(BigInt::one(), |acc, &k| acc * factorial(k));
    let scale = Q::from_integer(n_fact);
    let coeffs = exp_g
        .remove(nv)
        .unwrap_or_default()
        .into_iter()
        .map(|(mono, c)| (mono, c * &scale))
        .collect();
    Ok(PolynomialWn::from_coeffs(n.clone(), coeffs))
}

/// Integer form `D * W` with a common denominator, for fast exact evaluation.
struct IntegerPoly {
    terms: Vec<(Vec<u32>, u32, i128)>,
}

impl IntegerPoly {
    fn new(poly: &PolynomialWn) -> Option<(IntegerPoly, BigInt)> {
        let den = poly
            .coeffs
            .values()
            .fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
        let terms = poly
            .coeffs
            .iter()
            .map(|((i, j), c)| {
                let scaled = c.numer() * (&den / c.denom());
                scaled.to_i128().map(|v| (i.clone(), *j, v))
            })
            .collect::<Option<Vec<_>>>()?;
        Some((IntegerPoly { terms }, den))
    }

    fn eval(&self, t: i128, x: &[i128]) -> Option<i128> {
        let mut acc: i128 = 0;
        for (i, j, c) in &self.terms {
            let mut v = *c;
            v = v.checked_mul(t.checked_pow(*j)?)?;
            for (xi, &k) in x.iter().zip(i) {
                v = v.checked_mul(xi.checked_pow(k)?)?;
            }
            acc = acc.checked_add(v)?;
        }
        Some(acc)
    }
}

/// True iff `sum_e k(e) W(t+1, x+e) = W(t, x)` exactly for every `t` in
/// `t_range` and every `x` in `x_range^d`.
pub fn check_harmonicity(
    poly: &PolynomialWn,
    kernel: &StepKernel,
    t_range: RangeInclusive<i64>,
    x_range: RangeInclusive<i32>,
) -> bool {
    let d = poly.dim();
    if kernel.dim() != d {
        return false;
    }
    let points = grid_points(d, &x_range);
    if let Some(result) = check_integer(poly, kernel, &t_range, &points) {
        return result;
    }
    check_rational(poly, kernel, &t_range, &points)
}

fn grid_points(d: usize, range: &RangeInclusive<i32>) -> Vec<Vec<i32>> {
    let mut out = vec![vec![]];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|p| {
                range.clone().map(move |c| {
                    let mut q = p.clone();
                    q.push(c);
                    q
                })
            })
            .collect();
    }
    out
}

fn check_integer(
    poly: &PolynomialWn,
    kernel: &StepKernel,
    t_range: &RangeInclusive<i64>,
    points: &[Vec<i32>],
) -> Option<bool> {
    let d = poly.dim();
    let (ip, _) = IntegerPoly::new(poly)?;
    let kden = kernel.entries().values().fold(BigInt::one(), |acc, p| acc.lcm(p.denom()));
    let steps: Vec<(Vec<i128>, i128)> = kernel
        .entries()
        .iter()
        .map(|(e, p)| {
            let w = (p.numer() * (&kden / p.denom())).to_i128()?;
            Some((e.coords(d).iter().map(|&c| c as i128).collect(), w))
        })
        .collect::<Option<_>>()?;
    let kden = kden.to_i128()?;
    for t in t_range.clone() {
        for x in points {
            let xi: Vec<i128> = x.iter().map(|&c| c as i128).collect();
            let here = ip.eval(t as i128, &xi)?.checked_mul(kden)?;
            let mut next: i128 = 0;
            for (e, w) in &steps {
                let y: Vec<i128> = xi.iter().zip(e).map(|(a, b)| a + b).collect();
                next = next.checked_add(w.checked_mul(ip.eval(t as i128 + 1, &y)?)?)?;
            }
            if next != here {
                return Some(false);
            }
        }
    }
    Some(true)
}

fn check_rational(
    poly: &PolynomialWn,
    kernel: &StepKernel,
    t_range: &RangeInclusive<i64>,
    points: &[Vec<i32>],
) -> bool {
    let d = poly.dim();
    for t in t_range.clone() {
        let tq = rational::int(t);
        let t1 = rational::int(t + 1);
        for x in points {
            let site = Site::new(x);
            let xq: Vec<Q> = x.iter().map(|&c| rational::int(c as i64)).collect();
            let here = poly.eval_exact(&tq, &xq);
            let next: Q = kernel
                .entries()
                .iter()
                .map(|(e, p)| {
                    let y: Vec<Q> = site.offset(e).coords(d).iter().map(|&c| rational::int(c as i64)).collect();
                    p * poly.eval_exact(&t1, &y)
                })
                .sum();
            if next != here {
                return false;
            }
        }
    }
    true
}

/// `int x^n dnu` for the centered Gaussian with covariance `I/d`.
pub fn gaussian_moment(n: &MultiIndex, d: usize) -> Q {
    let mut out = Q::one();
    for &k in &n.0 {
        if k % 2 == 1 {
            return Q::zero();
        }
        let half = k / 2;
        let double_fact: BigInt = (1..=half).fold(BigInt::one(), |acc, i| acc * BigInt::from(2 * i - 1));
        out *= Q::new(double_fact, num_traits::pow(BigInt::from(d), half as usize));
    }
    out
}
