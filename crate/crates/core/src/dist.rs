//! Elementary discrete laws on the non-negative integers.
//!
//! Every law is a [`TruncatedPmf`]: explicit masses on a window of consecutive
//! support points plus a `tail` that upper-bounds the probability beyond the
//! window. Tails are computed by forward summation with a geometric remainder
//! rather than as `1 - sum`, so they stay meaningful far below `f64::EPSILON`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default bound on the truncated Poisson tail.
pub const DEFAULT_TAIL_TOL: f64 = 1e-15;

/// Allowed deviation of `sum(mass) + tail` from one.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// `e^{-lambda}` underflows past this mean.
pub const MAX_POISSON_MEAN: f64 = 700.0;

/// Success probabilities `p_1, ..., p_n` of independent Bernoulli variables.
///
/// Aggregates (`sum_p`, `sum_p2`, `max_p`) are computed on every call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::EmptyProbVector);
        }
        if let Some((index, &value)) = p.iter().enumerate().find(|(_, &v)| !(v > 0.0 && v <= 1.0)) {
            return Err(Error::ProbabilityOutOfRange { index, value });
        }
        Ok(Self(p))
    }

    /// `n` copies of `p`.
    pub fn constant(p: f64, n: usize) -> Result<Self> {
        Self::new(vec![p; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Always false; kept for the `len` convention.
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().copied()
    }

    pub fn sum_p(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn sum_p2(&self) -> f64 {
        self.0.iter().map(|p| p * p).sum()
    }

    pub fn max_p(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    /// Same entries, largest first.
    pub fn sorted_descending(&self) -> Self {
        let mut p = self.0.clone();
        p.sort_by(|a, b| b.total_cmp(a));
        Self(p)
    }

    /// Copy with `p` appended as `p_{n+1}`.
    pub fn with_appended(&self, p: f64) -> Result<Self> {
        let mut v = self.0.clone();
        v.push(p);
        Self::new(v)
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(value: ProbVector) -> Self {
        value.0
    }
}

/// A pmf on `offset, offset + 1, ..., offset + mass.len() - 1` with an explicit
/// upper bound `tail` on the mass above the window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncatedPmf {
    offset: usize,
    mass: Vec<f64>,
    tail: f64,
}

/// Result of the generalized inverse cdf.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantile {
    /// Smallest represented support point `k` with `F(k) >= omega`.
    Value(usize),
    /// `omega` lies in the truncated tail; carries the first unrepresented point.
    BeyondTruncation(usize),
}

impl Quantile {
    pub fn value(self) -> usize {
        match self {
            Quantile::Value(k) | Quantile::BeyondTruncation(k) => k,
        }
    }

    pub fn is_beyond_truncation(self) -> bool {
        matches!(self, Quantile::BeyondTruncation(_))
    }
}

impl TruncatedPmf {
    pub fn new(offset: usize, mass: Vec<f64>, tail: f64) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::InvalidPmf("no represented support points".into()));
        }
        if let Some((i, m)) = mass
            .iter()
            .enumerate()
            .find(|(_, m)| !(m.is_finite() && **m >= 0.0))
        {
            return Err(Error::InvalidPmf(format!(
                "mass[{i}] = {m} is not a non-negative number"
            )));
        }
        if !(tail.is_finite() && tail >= 0.0) {
            return Err(Error::InvalidPmf(format!("tail = {tail} is negative")));
        }
        let total = kahan_sum(mass.iter().copied()) + tail;
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidPmf(format!(
                "sum(mass) + tail = {total}, expected 1"
            )));
        }
        Ok(Self { offset, mass, tail })
    }

    pub(crate) fn from_parts(offset: usize, mass: Vec<f64>, tail: f64) -> Self {
        debug_assert!(!mass.is_empty());
        debug_assert!(tail >= 0.0);
        Self { offset, mass, tail }
    }

    /// Unit mass at `k`.
    pub fn point(k: usize) -> Self {
        Self::from_parts(k, vec![1.0], 0.0)
    }

    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid("p", p, "must lie in [0, 1]"));
        }
        Ok(Self::from_parts(0, vec![1.0 - p, p], 0.0))
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn tail(&self) -> f64 {
        self.tail
    }

    /// One past the largest represented support point.
    pub fn end(&self) -> usize {
        self.offset + self.mass.len()
    }

    /// Mass at `k`; zero outside the represented window.
    pub fn get(&self, k: usize) -> f64 {
        k.checked_sub(self.offset)
            .and_then(|i| self.mass.get(i))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        kahan_sum(self.mass.iter().copied()) + self.tail
    }

    /// `P(X >= k)` including the tail, summed smallest terms first.
    pub fn upper_sum(&self, k: usize) -> f64 {
        let start = k.saturating_sub(self.offset).min(self.mass.len());
        self.mass[start..]
            .iter()
            .rev()
            .fold(self.tail, |acc, m| acc + m)
    }

    /// `F(k) = P(X <= k)` over the represented window.
    pub fn cdf(&self, k: usize) -> f64 {
        if k < self.offset {
            return 0.0;
        }
        let stop = (k - self.offset + 1).min(self.mass.len());
        kahan_sum(self.mass[..stop].iter().copied())
    }

    /// Generalized inverse `inf { k : F(k) >= omega }`.
    pub fn quantile(&self, omega: f64) -> Result<Quantile> {
        if !(0.0..=1.0).contains(&omega) {
            return Err(invalid("omega", omega, "must lie in [0, 1]"));
        }
        let mut cum = 0.0;
        for (i, m) in self.mass.iter().enumerate() {
            cum += m;
            if cum >= omega {
                return Ok(Quantile::Value(self.offset + i));
            }
        }
        Ok(Quantile::BeyondTruncation(self.end()))
    }
}

/// Neumaier-compensated sum.
pub(crate) fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn check_poisson_mean(lambda: f64) -> Result<()> {
    if lambda.is_nan() || lambda <= 0.0 || lambda.is_infinite() {
        return Err(invalid("lambda", lambda, "must be positive"));
    }
    if lambda > MAX_POISSON_MEAN {
        return Err(invalid("lambda", lambda, "exceeds the supported mean 700"));
    }
    Ok(())
}

fn check_unit_probability(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(invalid("p", p, "must lie in (0, 1]"));
    }
    Ok(())
}

/// `sum_{j > k} e^{-lambda} lambda^j / j!` given `term_k = e^{-lambda} lambda^k / k!`.
///
/// Terms are summed forward until the geometric remainder bound
/// `term * r / (1 - r)`, `r = lambda / (j + 1)`, is negligible; the bound is
/// added, so the result never underestimates.
pub(crate) fn poisson_tail_after(lambda: f64, k: usize, term_k: f64) -> f64 {
    let mut term = term_k;
    let mut sum = 0.0;
    let mut j = k;
    loop {
        j += 1;
        term *= lambda / j as f64;
        sum += term;
        let r = lambda / (j + 1) as f64;
        if r < 1.0 {
            let rest = term * r / (1.0 - r);
            if rest <= sum * f64::EPSILON || rest < f64::MIN_POSITIVE {
                return sum + rest;
            }
        }
    }
}

/// Smallest `kmax` for which the Poisson(`lambda`) tail beyond `kmax` is below `tol`.
pub fn poisson_kmax_for(lambda: f64, tol: f64) -> Result<usize> {
    check_poisson_mean(lambda)?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(invalid("tol", tol, "must be positive"));
    }
    let mut term = (-lambda).exp();
    let mut k = 0usize;
    loop {
        let r = lambda / (k + 1) as f64;
        if r < 1.0 && term * r / (1.0 - r) < tol {
            return Ok(k);
        }
        k += 1;
        term *= lambda / k as f64;
    }
}

/// Poisson(`lambda`) masses on `0..=kmax` by the recurrence `m_k = m_{k-1} lambda / k`.
pub fn pmf_poisson(lambda: f64, kmax: usize) -> Result<TruncatedPmf> {
    check_poisson_mean(lambda)?;
    let mut mass = Vec::with_capacity(kmax + 1);
    let mut term = (-lambda).exp();
    mass.push(term);
    for k in 1..=kmax {
        term *= lambda / k as f64;
        mass.push(term);
    }
    let tail = poisson_tail_after(lambda, kmax, term);
    Ok(TruncatedPmf::from_parts(0, mass, tail))
}

/// Poisson pmf truncated where the tail drops below [`DEFAULT_TAIL_TOL`].
pub fn pmf_poisson_default(lambda: f64) -> Result<TruncatedPmf> {
    pmf_poisson(lambda, poisson_kmax_for(lambda, DEFAULT_TAIL_TOL)?)
}

/// Law of `sum_i nu_i` (Poisson-binomial), one Bernoulli at a time.
pub fn pmf_poisson_binomial(p: &ProbVector, kmax: usize) -> Result<TruncatedPmf> {
    let n = p.len();
    if kmax > n {
        return Err(invalid("kmax", kmax as f64, "exceeds the number of trials"));
    }
    let mut dp = vec![0.0; n + 1];
    dp[0] = 1.0;
    for (used, pi) in p.iter().enumerate() {
        for k in (1..=used + 1).rev() {
            dp[k] = dp[k] * (1.0 - pi) + dp[k - 1] * pi;
        }
        dp[0] *= 1.0 - pi;
    }
    let tail = dp[kmax + 1..].iter().rev().sum::<f64>();
    dp.truncate(kmax + 1);
    Ok(TruncatedPmf::from_parts(0, dp, tail))
}

/// Total variation distance with the uncertainty carried by the tails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TotalVariation {
    /// `1/2 sum_k |a(k) - b(k)|` over the represented windows.
    pub value: f64,
    /// `1/2 (a.tail + b.tail)`; zero means `value` is exact.
    pub radius: f64,
}

pub fn total_variation(a: &TruncatedPmf, b: &TruncatedPmf) -> TotalVariation {
    let lo = a.offset().min(b.offset());
    let hi = a.end().max(b.end());
    let value = 0.5 * kahan_sum((lo..hi).map(|k| (a.get(k) - b.get(k)).abs()));
    TotalVariation {
        value,
        radius: 0.5 * (a.tail() + b.tail()),
    }
}

/// `e^{-p} - (1 - p)`, accurate for small `p` where the direct form cancels.
pub(crate) fn bernoulli_poisson_gap(p: f64) -> f64 {
    if p >= 0.1 {
        return (-p).exp() - 1.0 + p;
    }
    // sum_{j >= 2} (-p)^j / j!
    let mut term = p * p / 2.0;
    let mut sum = 0.0f64;
    let mut j = 2.0;
    while term.abs() > sum.abs() * 1e-18 && term != 0.0 {
        sum += term;
        j += 1.0;
        term *= -p / j;
    }
    sum
}

/// Law of `zeta = |nu* - pi*|` for one quantile-coupled Bernoulli(`p`)/Poisson(`p`) pair.
///
/// `P(zeta = 0) = 1 - p(1 - e^{-p})`,
/// `P(zeta = 1) = e^{-p} - 1 + p + (p^2/2) e^{-p}`,
/// `P(zeta = k) = p^{k+1} e^{-p} / (k+1)!` for `k >= 2`.
pub fn pmf_zeta(p: f64, kmax: usize) -> Result<TruncatedPmf> {
    check_unit_probability(p)?;
    let e = (-p).exp();
    let p_nonzero = -p * (-p).exp_m1();
    let mut mass = Vec::with_capacity(kmax + 1);
    mass.push(1.0 - p_nonzero);
    if kmax == 0 {
        return Ok(TruncatedPmf::from_parts(0, mass, p_nonzero));
    }
    // term_j = e^{-p} p^j / j!, so P(zeta = k) = term_{k+1}
    let mut term = e * p * p / 2.0;
    mass.push(bernoulli_poisson_gap(p) + term);
    for k in 2..=kmax {
        term *= p / (k + 1) as f64;
        mass.push(term);
    }
    let tail = poisson_tail_after(p, kmax + 1, term);
    Ok(TruncatedPmf::from_parts(0, mass, tail))
}

/// Exact joint law of the quantile-coupled pair `(nu*, pi*)`.
///
/// Support: `(0,0)`, `(1,0)` and `(1,k)` for `k >= 1`; cells with `pi* > kmax`
/// are lumped into `tail`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointIncrementPmf {
    p: f64,
    zero_zero: f64,
    one_zero: f64,
    /// `one_k[k - 1] = P(nu* = 1, pi* = k)`.
    one_k: Vec<f64>,
    tail: f64,
}

pub fn pmf_joint_increment(p: f64, kmax: usize) -> Result<JointIncrementPmf> {
    check_unit_probability(p)?;
    let e = (-p).exp();
    let mut one_k = Vec::with_capacity(kmax);
    let mut term = e;
    for k in 1..=kmax {
        term *= p / k as f64;
        one_k.push(term);
    }
    let tail = poisson_tail_after(p, kmax, term);
    Ok(JointIncrementPmf {
        p,
        zero_zero: 1.0 - p,
        one_zero: bernoulli_poisson_gap(p),
        one_k,
        tail,
    })
}

impl JointIncrementPmf {
    pub fn p(&self) -> f64 {
        self.p
    }

    /// Largest represented value of `pi*`.
    pub fn kmax(&self) -> usize {
        self.one_k.len()
    }

    /// Mass of `pi* > kmax` (all with `nu* = 1`).
    pub fn tail(&self) -> f64 {
        self.tail
    }

    /// `P(nu* = nu, pi* = pi)` for represented cells.
    pub fn get(&self, nu: u8, pi: usize) -> f64 {
        match (nu, pi) {
            (0, 0) => self.zero_zero,
            (1, 0) => self.one_zero,
            (1, k) => self.one_k.get(k - 1).copied().unwrap_or(0.0),
            _ => 0.0,
        }
    }

    /// All represented cells as `((nu, pi), probability)`.
    pub fn cells(&self) -> impl Iterator<Item = ((u8, usize), f64)> + '_ {
        [((0, 0), self.zero_zero), ((1, 0), self.one_zero)]
            .into_iter()
            .chain(self.one_k.iter().enumerate().map(|(i, &m)| ((1, i + 1), m)))
    }

    pub fn nu_marginal(&self) -> TruncatedPmf {
        let one = self.one_zero + self.one_k.iter().rev().sum::<f64>() + self.tail;
        TruncatedPmf::from_parts(0, vec![self.zero_zero, one], 0.0)
    }

    pub fn pi_marginal(&self) -> TruncatedPmf {
        let mut mass = Vec::with_capacity(self.one_k.len() + 1);
        mass.push(self.zero_zero + self.one_zero);
        mass.extend_from_slice(&self.one_k);
        TruncatedPmf::from_parts(0, mass, self.tail)
    }

    /// Law of `|nu* - pi*|` on `0..kmax`. With `kmax < 2` the `(1, 0)` cell
    /// cannot be placed in the window and joins the tail.
    pub fn abs_difference(&self) -> TruncatedPmf {
        let kmax = self.one_k.len();
        let mut mass = vec![0.0; kmax.max(1)];
        let mut tail = self.tail;
        mass[0] += self.zero_zero;
        match mass.get_mut(1) {
            Some(m) => *m += self.one_zero,
            None => tail += self.one_zero,
        }
        for (i, &m) in self.one_k.iter().enumerate() {
            // pi* = i + 1 and nu* = 1
            mass[i] += m;
        }
        TruncatedPmf::from_parts(0, mass, tail)
    }
}
