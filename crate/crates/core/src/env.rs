//! Environment laws `Q`, the lazily realized field `q_{t,x}`, annealed
//! moments and the regular-growth condition.

use std::sync::Arc;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::prf::{domain, mix64, Key};
use crate::rational::{self, Q};
use crate::{Error, Result, Site};

/// Tolerance on probability sums in floating mode.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Finite-support offspring law over child counts `0..=k_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct OffspringPmf {
    probs: Vec<f64>,
    exact: Vec<Q>,
    cdf: Vec<f64>,
    support: Vec<(u32, f64)>,
}

impl OffspringPmf {
    /// Validates and canonicalizes (trailing zero entries are dropped).
    /// A sum within [`SUM_TOLERANCE`] of 1 is renormalized exactly.
    pub fn new(mut exact: Vec<Q>) -> Result<Self> {
        while exact.len() > 1 && exact.last().is_some_and(|p| p.is_zero()) {
            exact.pop();
        }
        if exact.is_empty() {
            return Err(Error::Pmf("empty probability vector".into()));
        }
        for (k, p) in exact.iter().enumerate() {
            if p.is_negative() || *p > Q::one() {
                return Err(Error::Pmf(format!("probs[{k}] = {p} outside [0, 1]")));
            }
        }
        let sum: Q = exact.iter().sum();
        if sum.is_zero() {
            return Err(Error::Pmf("all probabilities are zero".into()));
        }
        let dev = rational::to_f64(&(sum.clone() - Q::one())).abs();
        if dev > SUM_TOLERANCE {
            return Err(Error::Pmf(format!(
                "probabilities sum to {}, expected 1",
                rational::to_f64(&sum)
            )));
        }
        if !sum.is_one() {
            for p in exact.iter_mut() {
                *p /= &sum;
            }
        }
        let probs: Vec<f64> = exact.iter().map(rational::to_f64).collect();
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cdf.push(acc);
        }
        *cdf.last_mut().unwrap() = 1.0;
        let support = probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(k, &p)| (k as u32, p))
            .collect();
        Ok(OffspringPmf { probs, exact, cdf, support })
    }

    pub fn from_f64(probs: &[f64]) -> Result<Self> {
        let exact = probs
            .iter()
            .map(|&p| rational::from_f64(p).ok_or_else(|| Error::Pmf(format!("non-finite entry {p}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(exact)
    }

    /// Point mass at `k` children.
    pub fn delta(k: usize) -> Self {
        let mut exact = vec![Q::zero(); k + 1];
        exact[k] = Q::one();
        Self::new(exact).expect("point mass is a valid pmf")
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn exact(&self) -> &[Q] {
        &self.exact
    }

    pub fn k_max(&self) -> u32 {
        (self.probs.len() - 1) as u32
    }

    /// `(k, q(k))` for every `k` with `q(k) > 0`.
    pub fn support(&self) -> &[(u32, f64)] {
        &self.support
    }

    /// `Some(k)` when the law is a point mass.
    pub fn degenerate(&self) -> Option<u32> {
        match self.support.as_slice() {
            [(k, _)] => Some(*k),
            _ => None,
        }
    }

    pub fn moment(&self, p: u32) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, q)| (k as f64).powi(p as i32) * q)
            .sum()
    }

    pub fn moment_exact(&self, p: u32) -> Q {
        self.exact
            .iter()
            .enumerate()
            .map(|(k, q)| rational::pow(&rational::int(k as i64), p) * q)
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    /// `sum_{j >= k} q(j)`, exactly.
    pub fn tail_exact(&self, k: usize) -> Q {
        self.exact.iter().skip(k).sum()
    }

    pub fn tail(&self, k: usize) -> f64 {
        if k == 0 {
            return 1.0;
        }
        self.probs.iter().skip(k).sum()
    }

    /// Inverse-CDF draw from a uniform `u` in `[0, 1)`.
    #[inline]
    pub fn child_count(&self, u: f64) -> u32 {
        self.cdf.iter().position(|&c| u < c).unwrap_or(self.cdf.len() - 1) as u32
    }
}

/// One mixture component of `Q`.
#[derive(Clone, Debug)]
pub struct Atom {
    pub pmf: OffspringPmf,
    pub weight: f64,
    pub weight_exact: Q,
}

/// Annealed moments of an environment law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub m: f64,
    pub m2: f64,
    pub alpha: f64,
    pub c: f64,
}

/// The same moments as exact rationals.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactMoments {
    pub m: Q,
    pub m2: Q,
    /// `Q[m_{t,x}^2]`.
    pub mean_square: Q,
    pub alpha: Q,
    pub c: Q,
}

/// A finite mixture law `Q` over offspring pmfs.
#[derive(Clone, Debug)]
pub struct EnvironmentModel {
    atoms: Vec<Atom>,
    cumulative: Vec<f64>,
    annealed: OffspringPmf,
    exact: ExactMoments,
    moments: Moments,
}

impl EnvironmentModel {
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// The `Q`-average pmf `q(k)`.
    pub fn annealed_pmf(&self) -> &OffspringPmf {
        &self.annealed
    }

    pub fn moments(&self) -> Moments {
        self.moments
    }

    pub fn exact_moments(&self) -> &ExactMoments {
        &self.exact
    }

    pub fn m(&self) -> f64 {
        self.moments.m
    }

    /// Atom selected by a uniform `u` in `[0, 1)`.
    #[inline]
    pub fn atom_for(&self, u: f64) -> usize {
        self.cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.cumulative.len() - 1)
    }

    /// `Q[m_{t,x}^2]` from the tail sums `T_k = sum_{j>=k} q_{t,x}(j)`:
    /// `m_{t,x}^2 = sum_{k,l>=1} T_k T_l`. Independent of the mixture route.
    pub fn mean_square_via_tails(&self) -> Q {
        let kmax = self.annealed.k_max() as usize;
        let mut total = Q::zero();
        for k in 1..=kmax {
            for l in 1..=kmax {
                let pair: Q = self
                    .atoms
                    .iter()
                    .map(|a| a.pmf.tail_exact(k) * a.pmf.tail_exact(l) * &a.weight_exact)
                    .sum();
                total += pair;
            }
        }
        total
    }
}

/// Builds a model from `(pmf, weight)` pairs given as exact rationals.
pub fn build_environment(spec: Vec<(Vec<Q>, Q)>) -> Result<EnvironmentModel> {
    if spec.is_empty() {
        return Err(Error::Pmf("environment needs at least one atom".into()));
    }
    let total: Q = spec.iter().map(|(_, w)| w.clone()).sum();
    let dev = rational::to_f64(&(total.clone() - Q::one())).abs();
    if dev > SUM_TOLERANCE {
        return Err(Error::WeightSum { sum: rational::to_f64(&total) });
    }
    let mut atoms = Vec::with_capacity(spec.len());
    for (probs, w) in spec {
        if w.is_negative() {
            return Err(Error::WeightSum { sum: rational::to_f64(&total) });
        }
        let weight_exact = w / &total;
        atoms.push(Atom {
            pmf: OffspringPmf::new(probs)?,
            weight: rational::to_f64(&weight_exact),
            weight_exact,
        });
    }
    let kmax = atoms.iter().map(|a| a.pmf.k_max()).max().unwrap() as usize;
    let mut annealed = vec![Q::zero(); kmax + 1];
    for a in &atoms {
        for (k, p) in a.pmf.exact().iter().enumerate() {
            annealed[k] += p * &a.weight_exact;
        }
    }
    let annealed = OffspringPmf::new(annealed)?;
    let m = annealed.moment_exact(1);
    let m2 = annealed.moment_exact(2);
    let mean_square: Q = atoms
        .iter()
        .map(|a| {
            let mi = a.pmf.moment_exact(1);
            &mi * &mi * &a.weight_exact
        })
        .sum();
    let (alpha, c) = if m.is_zero() {
        (Q::zero(), Q::zero())
    } else {
        let msq = &m * &m;
        (&mean_square / &msq, (&m2 - &m) / &msq)
    };
    let exact = ExactMoments { m, m2, mean_square, alpha, c };
    let moments = Moments {
        m: rational::to_f64(&exact.m),
        m2: rational::to_f64(&exact.m2),
        alpha: rational::to_f64(&exact.alpha),
        c: rational::to_f64(&exact.c),
    };
    let mut cumulative = Vec::with_capacity(atoms.len());
    let mut acc = Q::zero();
    for a in &atoms {
        acc += &a.weight_exact;
        cumulative.push(rational::to_f64(&acc));
    }
    *cumulative.last_mut().unwrap() = 1.0;
    Ok(EnvironmentModel { atoms, cumulative, annealed, exact, moments })
}

/// `(m, m2, alpha, c)` of a model.
pub fn environment_moments(model: &EnvironmentModel) -> Moments {
    model.moments()
}

/// A probability written either as a JSON/TOML number or as a string such as `"3/5"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProbValue {
    Number(f64),
    Text(String),
}

impl ProbValue {
    pub fn to_exact(&self) -> Result<Q> {
        match self {
            ProbValue::Number(x) => {
                rational::from_f64(*x).ok_or_else(|| Error::Pmf(format!("non-finite value {x}")))
            }
            ProbValue::Text(s) => {
                rational::parse(s).ok_or_else(|| Error::Pmf(format!("cannot parse probability {s:?}")))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomSpec {
    pub probs: Vec<ProbValue>,
    pub weight: ProbValue,
}

/// Environment file contents: `{"atoms": [{"probs": [...], "weight": w}, ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub atoms: Vec<AtomSpec>,
}

impl EnvironmentSpec {
    pub fn build(&self) -> Result<EnvironmentModel> {
        let spec = self
            .atoms
            .iter()
            .map(|a| {
                let probs = a.probs.iter().map(ProbValue::to_exact).collect::<Result<Vec<_>>>()?;
                Ok((probs, a.weight.to_exact()?))
            })
            .collect::<Result<Vec<_>>>()?;
        build_environment(spec)
    }

    fn deltas(parts: &[(usize, &str)]) -> Self {
        EnvironmentSpec {
            atoms: parts
                .iter()
                .map(|&(k, w)| {
                    let mut probs = vec![ProbValue::Text("0".into()); k + 1];
                    probs[k] = ProbValue::Text("1".into());
                    AtomSpec { probs, weight: ProbValue::Text(w.into()) }
                })
                .collect(),
        }
    }

    /// Named presets: `env-a` (diverging second moment in d = 3), `env-b`
    /// (regular growth in d = 3) and `deterministic` (one child always).
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "env-a" => Some(Self::deltas(&[(4, "3/10"), (0, "7/10")])),
            "env-b" => Some(Self::deltas(&[(2, "3/5"), (0, "2/5")])),
            "deterministic" => Some(Self::deltas(&[(1, "1")])),
            _ => None,
        }
    }

    pub const PRESETS: [&'static str; 3] = ["env-a", "env-b", "deterministic"];
}

/// Builds a named preset model.
pub fn preset(name: &str) -> Result<EnvironmentModel> {
    EnvironmentSpec::preset(name)
        .ok_or_else(|| Error::Config(format!("unknown environment preset {name:?}")))?
        .build()
}

/// The i.i.d. field `(t, x) -> q_{t,x}`, realized lazily from a keyed hash.
#[derive(Clone, Debug)]
pub struct EnvironmentField {
    model: Arc<EnvironmentModel>,
    seed: u64,
    dim: usize,
}

impl EnvironmentField {
    pub fn new(model: Arc<EnvironmentModel>, seed: u64, dim: usize) -> Self {
        EnvironmentField { model, seed, dim }
    }

    pub fn model(&self) -> &EnvironmentModel {
        &self.model
    }

    pub fn model_arc(&self) -> &Arc<EnvironmentModel> {
        &self.model
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The field restricted to time `t`.
    #[inline]
    pub fn slice(&self, t: u64) -> FieldSlice<'_> {
        FieldSlice { model: &self.model, base: Key::new(self.seed, domain::ENVIRONMENT).absorb(t).finish() }
    }

    /// Atom index at `(t, x)`.
    #[inline]
    pub fn atom_index(&self, t: u64, x: &Site) -> usize {
        self.slice(t).atom_index(x)
    }

    #[inline]
    pub fn pmf_at(&self, t: u64, x: &Site) -> &OffspringPmf {
        &self.model.atoms[self.atom_index(t, x)].pmf
    }

    /// `q_{t,x}`; every particle at `(t, x)` uses this same law.
    pub fn sample_pmf(&self, t: i64, x: &Site) -> Result<&OffspringPmf> {
        if t < 0 {
            return Err(Error::Domain(format!("time index {t} is negative")));
        }
        Ok(self.pmf_at(t as u64, x))
    }

    /// `m_{t,x}`.
    #[inline]
    pub fn mean_at(&self, t: u64, x: &Site) -> f64 {
        self.pmf_at(t, x).mean()
    }
}

/// `q_{t, .}` for one fixed `t`. Coordinates are packed two per word and
/// mixed independently, so the per-site cost is a few parallel hashes.
#[derive(Clone, Copy, Debug)]
pub struct FieldSlice<'a> {
    model: &'a EnvironmentModel,
    base: u64,
}

impl<'a> FieldSlice<'a> {
    #[inline]
    pub fn atom_index(&self, x: &Site) -> usize {
        if self.model.atoms.len() == 1 {
            return 0;
        }
        let mut h = self.base;
        for (pair, salt) in PAIR_SALT.iter().enumerate().take(crate::MAX_DIM / 2) {
            let word = (x.get(2 * pair) as u32 as u64) | ((x.get(2 * pair + 1) as u32 as u64) << 32);
            if word != 0 {
                h ^= mix64(word.wrapping_add(*salt)).rotate_left(13 * pair as u32 + 1);
            }
        }
        let u = (mix64(h) >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        self.model.atom_for(u)
    }

    #[inline]
    pub fn pmf_at(&self, x: &Site) -> &'a OffspringPmf {
        &self.model.atoms[self.atom_index(x)].pmf
    }
}

const PAIR_SALT: [u64; crate::MAX_DIM / 2] =
    [0x243F_6A88_85A3_08D3, 0x1319_8A2E_0370_7344, 0xA409_3822_299F_31D0, 0x082E_FA98_EC4E_6C89];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Regular,
    Fails,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub m: f64,
    pub m2: f64,
    pub alpha: f64,
    pub pi_d: f64,
    pub product: f64,
    pub verdict: Verdict,
    pub reasons: Vec<String>,
}

/// Checks `m > 1`, `m2 < inf` and `alpha * pi_d < 1`.
pub fn check_regular_growth(model: &EnvironmentModel, d: usize, pi_d: f64) -> ConditionReport {
    let mo = model.moments();
    let product = mo.alpha * pi_d;
    let mut reasons = Vec::new();
    if d <= 2 {
        reasons.push("recurrent dimension".to_string());
    }
    if mo.m <= 1.0 {
        reasons.push("m ≤ 1".to_string());
    }
    if !mo.m2.is_finite() {
        reasons.push("m2 = ∞".to_string());
    }
    if product >= 1.0 {
        reasons.push("alpha*pi_d ≥ 1".to_string());
    }
    ConditionReport {
        m: mo.m,
        m2: mo.m2,
        alpha: mo.alpha,
        pi_d,
        product,
        verdict: if reasons.is_empty() { Verdict::Regular } else { Verdict::Fails },
        reasons,
    }
}
