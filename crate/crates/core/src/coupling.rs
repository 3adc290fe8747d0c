//! Samplers for the quantile coupling of Bernoulli/Poisson pairs and for the
//! maximal coupling of two finitely supported laws, plus Monte Carlo tail
//! estimates of the path-maximum deviation.
//!
//! Randomness comes from `ChaCha8Rng`. A Monte Carlo run is split into fixed
//! chunks of [`CHUNK_SIZE`] paths and chunk `c` draws from stream `c` of the
//! master seed, so results do not depend on how chunks are scheduled.

use rand::distr::weighted::WeightedIndex;
use rand::distr::{Distribution, Open01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dist::{pmf_poisson_default, ProbVector, TruncatedPmf};
use crate::error::{invalid, Error, Result};

/// Paths per independently seeded Monte Carlo chunk.
pub const CHUNK_SIZE: u64 = 1 << 14;

/// Two-sided 95% normal quantile used by the Wilson interval.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Largest tail accepted by [`MaximalCoupling::new`].
pub const MAX_COUPLING_TAIL: f64 = 1e-12;

/// One coupled draw `(nu*, pi*)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoupledPair {
    pub nu: u8,
    pub pi: u32,
    /// `omega` fell in the truncated Poisson tail; `pi` is then the first
    /// unrepresented value, a lower bound on the true draw.
    pub beyond_truncation: bool,
}

/// Precomputed inverse cdfs for one success probability.
#[derive(Debug, Clone)]
pub struct PairSampler {
    nu_threshold: f64,
    pi_cdf: Vec<f64>,
}

impl PairSampler {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(invalid("p", p, "must lie in (0, 1]"));
        }
        let pmf = pmf_poisson_default(p)?;
        let pi_cdf = pmf
            .mass()
            .iter()
            .scan(0.0, |cum, m| {
                *cum += m;
                Some(*cum)
            })
            .collect();
        Ok(Self {
            nu_threshold: 1.0 - p,
            pi_cdf,
        })
    }

    /// Both coordinates driven by the same `omega`.
    #[inline]
    pub fn sample(&self, omega: f64) -> CoupledPair {
        let nu = u8::from(omega > self.nu_threshold);
        match self.pi_cdf.iter().position(|&c| c >= omega) {
            Some(k) => CoupledPair {
                nu,
                pi: k as u32,
                beyond_truncation: false,
            },
            None => CoupledPair {
                nu,
                pi: self.pi_cdf.len() as u32,
                beyond_truncation: true,
            },
        }
    }
}

/// `nu* = F_nu^{-1}(omega)`, `pi* = F_pi^{-1}(omega)` for Bernoulli(`p`) and Poisson(`p`).
pub fn sample_coupled_pair(p: f64, omega: f64) -> Result<CoupledPair> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(invalid("omega", omega, "must lie in [0, 1]"));
    }
    Ok(PairSampler::new(p)?.sample(omega))
}

/// One realization of the coupled processes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoupledPath {
    pub nu: Vec<u8>,
    pub pi: Vec<u32>,
    pub seed: u64,
    /// Some index drew from the truncated Poisson tail.
    pub beyond_truncation: bool,
}

impl CoupledPath {
    /// Checks equal lengths and that `pi[i] >= 1` forces `nu[i] = 1`.
    pub fn new(nu: Vec<u8>, pi: Vec<u32>, seed: u64) -> Result<Self> {
        if nu.len() != pi.len() {
            return Err(invalid("pi.len", pi.len() as f64, "must equal nu.len"));
        }
        for (i, (&a, &b)) in nu.iter().zip(&pi).enumerate() {
            if a > 1 || (b >= 1 && a != 1) {
                return Err(Error::InvalidPmf(format!(
                    "cell ({a}, {b}) at index {i} is outside the coupling support"
                )));
            }
        }
        Ok(Self {
            nu,
            pi,
            seed,
            beyond_truncation: false,
        })
    }

    pub fn len(&self) -> usize {
        self.nu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nu.is_empty()
    }

    /// `sum_i |nu[i] - pi[i]|`, the per-index discrepancy total.
    pub fn zeta_sum(&self) -> u64 {
        self.nu
            .iter()
            .zip(&self.pi)
            .map(|(&a, &b)| (i64::from(a) - i64::from(b)).unsigned_abs())
            .sum()
    }
}

/// `max_{k <= n} |sum_{i <= k} (nu[i] - pi[i])|`.
pub fn max_deviation(path: &CoupledPath) -> u64 {
    let mut d = 0i64;
    let mut worst = 0u64;
    for (&a, &b) in path.nu.iter().zip(&path.pi) {
        d += i64::from(a) - i64::from(b);
        worst = worst.max(d.unsigned_abs());
    }
    worst
}

/// Per-index samplers for a whole probability vector.
#[derive(Debug, Clone)]
pub struct PathSampler {
    pairs: Vec<PairSampler>,
}

/// Summary of one sampled path without materializing it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathSummary {
    pub max_deviation: u64,
    pub zeta_sum: u64,
    pub beyond_truncation: bool,
}

impl PathSampler {
    pub fn new(p: &ProbVector) -> Result<Self> {
        let pairs = p.iter().map(PairSampler::new).collect::<Result<_>>()?;
        Ok(Self { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Draws one uniform per index, in index order.
    pub fn sample_path<R: Rng + ?Sized>(&self, rng: &mut R, seed: u64) -> CoupledPath {
        let mut nu = Vec::with_capacity(self.pairs.len());
        let mut pi = Vec::with_capacity(self.pairs.len());
        let mut beyond = false;
        for s in &self.pairs {
            let pair = s.sample(rng.sample(Open01));
            nu.push(pair.nu);
            pi.push(pair.pi);
            beyond |= pair.beyond_truncation;
        }
        CoupledPath {
            nu,
            pi,
            seed,
            beyond_truncation: beyond,
        }
    }

    /// Same draws as [`sample_path`](Self::sample_path), reduced on the fly.
    pub fn sample_summary<R: Rng + ?Sized>(&self, rng: &mut R) -> PathSummary {
        let mut d = 0i64;
        let mut worst = 0u64;
        let mut zeta = 0u64;
        let mut beyond = false;
        for s in &self.pairs {
            let pair = s.sample(rng.sample(Open01));
            let step = i64::from(pair.nu) - i64::from(pair.pi);
            d += step;
            worst = worst.max(d.unsigned_abs());
            zeta += step.unsigned_abs();
            beyond |= pair.beyond_truncation;
        }
        PathSummary {
            max_deviation: worst,
            zeta_sum: zeta,
            beyond_truncation: beyond,
        }
    }
}

/// Coupled path with `omega_i` drawn from `ChaCha8Rng::seed_from_u64(seed)`.
pub fn simulate_coupled_paths(p: &ProbVector, seed: u64) -> Result<CoupledPath> {
    let sampler = PathSampler::new(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sampler.sample_path(&mut rng, seed))
}

/// RNG for Monte Carlo chunk `chunk` of a run seeded with `seed`.
pub fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Monte Carlo frequency with a 95% Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_samples: u64,
    pub successes: u64,
    pub seed: u64,
}

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    let n_f = n as f64;
    let phat = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (phat + z2 / (2.0 * n_f)) / denom;
    let half = z / denom * (phat * (1.0 - phat) / n_f + z2 / (4.0 * n_f * n_f)).sqrt();
    (
        (center - half).max(0.0).min(phat),
        (center + half).min(1.0).max(phat),
    )
}

impl McEstimate {
    pub fn from_counts(successes: u64, n_samples: u64, seed: u64) -> Self {
        let (ci_low, ci_high) = wilson_interval(successes, n_samples, Z_95);
        Self {
            point: successes as f64 / n_samples as f64,
            ci_low,
            ci_high,
            n_samples,
            successes,
            seed,
        }
    }

    /// Interval with each side's distance from `point` multiplied by `radii`.
    pub fn widened(&self, radii: f64) -> (f64, f64) {
        (
            (self.point - radii * (self.point - self.ci_low)).max(0.0),
            (self.point + radii * (self.ci_high - self.point)).min(1.0),
        )
    }

    /// Whether `[low, high]` meets the interval widened to `radii` radii.
    pub fn agrees_with(&self, low: f64, high: f64, radii: f64) -> bool {
        let (lo, hi) = self.widened(radii);
        low <= hi && high >= lo
    }
}

/// Exceedance counts of `{max deviation > z}` for each `z`, and of
/// `{zeta sum > z}` on the same paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TailCounts {
    pub n_samples: u64,
    pub max_deviation: Vec<u64>,
    pub zeta_sum: Vec<u64>,
}

/// Runs `n_samples` coupled paths and counts exceedances for every `z`.
///
/// Paths that touched the truncated Poisson tail count as exceedances.
pub fn count_tails(p: &ProbVector, zs: &[u64], n_samples: u64, seed: u64) -> Result<TailCounts> {
    if n_samples == 0 {
        return Err(invalid("n_samples", 0.0, "must be at least 1"));
    }
    let sampler = PathSampler::new(p)?;
    let chunks = n_samples.div_ceil(CHUNK_SIZE);
    let zero = || (vec![0u64; zs.len()], vec![0u64; zs.len()]);
    let (max_dev, zeta) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c);
            let len = CHUNK_SIZE.min(n_samples - c * CHUNK_SIZE);
            let (mut md, mut zs_count) = zero();
            for _ in 0..len {
                let s = sampler.sample_summary(&mut rng);
                for (j, &z) in zs.iter().enumerate() {
                    if s.beyond_truncation || s.max_deviation > z {
                        md[j] += 1;
                    }
                    if s.beyond_truncation || s.zeta_sum > z {
                        zs_count[j] += 1;
                    }
                }
            }
            (md, zs_count)
        })
        .reduce(zero, |(mut a, mut b), (c, d)| {
            a.iter_mut().zip(c).for_each(|(x, y)| *x += y);
            b.iter_mut().zip(d).for_each(|(x, y)| *x += y);
            (a, b)
        });
    Ok(TailCounts {
        n_samples,
        max_deviation: max_dev,
        zeta_sum: zeta,
    })
}

/// Monte Carlo estimate of `P(max deviation > z)` under the quantile coupling.
///
/// This is the tail of one admissible coupling, so it estimates an upper
/// bound on the minimal distance.
pub fn estimate_tail(p: &ProbVector, z: u64, n_samples: u64, seed: u64) -> Result<McEstimate> {
    Ok(estimate_tails(p, &[z], n_samples, seed)?.remove(0))
}

/// [`estimate_tail`] for several `z` from one set of paths.
pub fn estimate_tails(
    p: &ProbVector,
    zs: &[u64],
    n_samples: u64,
    seed: u64,
) -> Result<Vec<McEstimate>> {
    let counts = count_tails(p, zs, n_samples, seed)?;
    Ok(counts
        .max_deviation
        .iter()
        .map(|&c| McEstimate::from_counts(c, n_samples, seed))
        .collect())
}

/// Coupling of two laws attaining `P(x != y) = TV(a, b)`.
///
/// With probability `sum_k min(a(k), b(k))` both coordinates are one draw from
/// the normalized overlap; otherwise `x ~ (a - b)_+` and `y ~ (b - a)_+`,
/// which have disjoint supports.
#[derive(Debug, Clone)]
pub struct MaximalCoupling {
    lo: usize,
    overlap_weight: f64,
    residual_weight: f64,
    overlap: Option<WeightedIndex<f64>>,
    a_excess: Option<WeightedIndex<f64>>,
    b_excess: Option<WeightedIndex<f64>>,
}

impl MaximalCoupling {
    pub fn new(a: &TruncatedPmf, b: &TruncatedPmf) -> Result<Self> {
        for tail in [a.tail(), b.tail()] {
            if tail >= MAX_COUPLING_TAIL {
                return Err(Error::TailTooLarge {
                    tail,
                    limit: MAX_COUPLING_TAIL,
                });
            }
        }
        let lo = a.offset().min(b.offset());
        let hi = a.end().max(b.end());
        let mut overlap = Vec::with_capacity(hi - lo);
        let mut a_excess = Vec::with_capacity(hi - lo);
        let mut b_excess = Vec::with_capacity(hi - lo);
        for k in lo..hi {
            let (x, y) = (a.get(k), b.get(k));
            overlap.push(x.min(y));
            a_excess.push((x - y).max(0.0));
            b_excess.push((y - x).max(0.0));
        }
        let overlap_weight = crate::dist::kahan_sum(overlap.iter().copied());
        let residual_weight = crate::dist::kahan_sum(a_excess.iter().copied());
        let index = |w: &[f64]| WeightedIndex::new(w.iter().copied()).ok();
        Ok(Self {
            lo,
            overlap_weight,
            residual_weight,
            overlap: index(&overlap),
            a_excess: index(&a_excess),
            b_excess: index(&b_excess),
        })
    }

    /// Probability of the shared-draw branch.
    pub fn overlap_probability(&self) -> f64 {
        self.overlap_weight / (self.overlap_weight + self.residual_weight)
    }

    /// `P(x != y)` from the mixture weights.
    pub fn mismatch_probability(&self) -> f64 {
        self.residual_weight / (self.overlap_weight + self.residual_weight)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let u: f64 = rng.random();
        match (&self.overlap, &self.a_excess, &self.b_excess) {
            (Some(o), _, _) if u < self.overlap_probability() => {
                let k = self.lo + o.sample(rng);
                (k, k)
            }
            (_, Some(a), Some(b)) => (self.lo + a.sample(rng), self.lo + b.sample(rng)),
            // residual branch is empty only when a = b up to rounding
            (Some(o), _, _) => {
                let k = self.lo + o.sample(rng);
                (k, k)
            }
            _ => unreachable!("a pmf with positive mass always yields an overlap or residual"),
        }
    }
}

/// One draw from the maximal coupling of `a` and `b`.
pub fn maximal_coupling_sample(
    a: &TruncatedPmf,
    b: &TruncatedPmf,
    seed: u64,
) -> Result<(usize, usize)> {
    let coupling = MaximalCoupling::new(a, b)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(coupling.sample(&mut rng))
}
