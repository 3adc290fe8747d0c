//! Exact laws under the quantile coupling: the discrepancy sum
//! `Z_n = sum_i zeta_i`, its upper tail `Q_n(k) = P(Z_n >= k)`, and the
//! path-maximum exceedance `P(max_k |sum_{i<=k} (nu_i - pi_i)| > z)`.
//!
//! Truncated Poisson mass is never dropped silently. Convolutions push it
//! into the carried tail, and the exceedance DP brackets it between
//! `prob_low` and `prob_high`.

use serde::Serialize;

use crate::dist::{
    pmf_joint_increment, pmf_zeta, poisson_kmax_for, ProbVector, TruncatedPmf, DEFAULT_TAIL_TOL,
};
use crate::error::{invalid, Result};

/// Default support cap for `Z_n` and for `k`.
pub const DEFAULT_CAP: usize = 64;

const VALID_P: &str = "ProbVector entries lie in (0, 1]";

/// Law of `Z_n = sum_i zeta_i` on `0..=kmax`.
///
/// The tail is `P(Z_n > kmax)`: mass convolved with either operand's tail,
/// plus represented pairs whose sum leaves the window.
pub fn pmf_zeta_sum(p: &ProbVector, kmax: usize) -> TruncatedPmf {
    let mut iter = p.iter();
    let first = iter.next().expect("ProbVector is non-empty");
    let mut acc = pmf_zeta(first, kmax).expect(VALID_P);
    for pi in iter {
        let b = pmf_zeta(pi, kmax).expect(VALID_P);
        acc = convolve(&acc, &b, kmax);
    }
    acc
}

fn convolve(a: &TruncatedPmf, b: &TruncatedPmf, kmax: usize) -> TruncatedPmf {
    let (am, bm) = (a.mass(), b.mass());
    // suffix[j] = P(B >= j), tail included
    let mut suffix = vec![b.tail(); bm.len() + 1];
    for j in (0..bm.len()).rev() {
        suffix[j] = suffix[j + 1] + bm[j];
    }
    let mut mass = vec![0.0; kmax + 1];
    let mut overflow = 0.0;
    for (i, &x) in am.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in bm.iter().enumerate().take(kmax + 1 - i) {
            mass[i + j] += x * y;
        }
        // pairs with i + j > kmax, and b's own tail
        let first_out = (kmax + 1 - i).min(bm.len());
        overflow += x * suffix[first_out];
    }
    TruncatedPmf::from_parts(0, mass, a.tail() + overflow)
}

/// A probability with the truncation radius it carries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailProb {
    /// Upper value; truncated mass is included.
    pub value: f64,
    pub radius: f64,
}

/// `Q_n(k) = P(sum_i zeta_i >= k)` for `k >= 1`.
pub fn q_tail(p: &ProbVector, k: usize) -> Result<TailProb> {
    if k == 0 {
        return Err(invalid("k", 0.0, "must be at least 1"));
    }
    Ok(q_tail_from(&pmf_zeta_sum(p, k.max(DEFAULT_CAP)), k))
}

/// `Q_n(k)` read off an already computed law of `Z_n`.
pub fn q_tail_from(zeta_sum: &TruncatedPmf, k: usize) -> TailProb {
    TailProb {
        value: zeta_sum.upper_sum(k),
        radius: zeta_sum.tail(),
    }
}

/// `Q_n(k)` for `k = 0..=kmax` by the total-probability recursion over the
/// last index,
/// `Q_n(k) = P(zeta_n >= k) + sum_{m<k} P(zeta_n = m) Q_{n-1}(k - m)`,
/// started from `Q_0(k) = 0` for `k >= 1`. Entry 0 is 1.
pub fn q_tails_by_recursion(p: &ProbVector, kmax: usize) -> Vec<f64> {
    let mut q = vec![0.0; kmax + 1];
    q[0] = 1.0;
    for pi in p.iter() {
        let zeta = pmf_zeta(pi, kmax.max(DEFAULT_CAP)).expect(VALID_P);
        let mut next = vec![0.0; kmax + 1];
        next[0] = 1.0;
        for (k, slot) in next.iter_mut().enumerate().skip(1) {
            let mut s = zeta.upper_sum(k);
            for m in 0..k {
                s += zeta.get(m) * q[k - m];
            }
            *slot = s;
        }
        q = next;
    }
    q
}

/// Bracket on `P(max_{k<=n} |sum_{i<=k} (nu*_i - pi*_i)| > z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExceedanceResult {
    pub prob_low: f64,
    pub prob_high: f64,
    pub z: u64,
    /// Total truncated Poisson mass over all indices; bounds the bracket width.
    pub truncation_tail: f64,
}

impl ExceedanceResult {
    pub fn width(&self) -> f64 {
        self.prob_high - self.prob_low
    }
}

/// Exceedance with every Poisson truncated where its tail drops below 1e-15.
pub fn exact_exceedance(p: &ProbVector, z: u64) -> ExceedanceResult {
    exact_exceedance_with_cap(p, z, None)
}

/// Forward DP over the prefix deviation `D in [-z, z]` with an absorbing
/// exceedance state. Increments are `0` for `(0,0)`, `+1` for `(1,0)` and
/// `1 - k` for `(1,k)`.
///
/// A path that enters a truncated cell (`pi* > cap`) is counted as exceeded
/// when every such cell leaves `[-z, z]` from its current `D`; otherwise its
/// fate is unknown and it contributes to `prob_high` only.
pub fn exact_exceedance_with_cap(p: &ProbVector, z: u64, cap: Option<usize>) -> ExceedanceResult {
    let zi = z as i64;
    let width = 2 * z as usize + 1;
    let mut state = vec![0.0f64; width];
    state[z as usize] = 1.0;
    let mut next = vec![0.0f64; width];
    let mut exceeded = 0.0;
    let mut unknown = 0.0;
    let mut budget = 0.0;
    for pi in p.iter() {
        let kmax = match cap {
            Some(c) => c,
            None => poisson_kmax_for(pi, DEFAULT_TAIL_TOL).expect(VALID_P),
        };
        let joint = pmf_joint_increment(pi, kmax).expect(VALID_P);
        let cells: Vec<(i64, f64)> = joint
            .cells()
            .map(|((nu, k), w)| (i64::from(nu) - k as i64, w))
            .collect();
        let tail = joint.tail();
        budget += tail;
        next.iter_mut().for_each(|x| *x = 0.0);
        for (idx, &q) in state.iter().enumerate() {
            if q == 0.0 {
                continue;
            }
            let d = idx as i64 - zi;
            for &(step, w) in &cells {
                let d2 = d + step;
                if d2.abs() > zi {
                    exceeded += q * w;
                } else {
                    next[(d2 + zi) as usize] += q * w;
                }
            }
            // largest deviation reachable through a truncated cell is d - kmax
            if d - (kmax as i64) < -zi {
                exceeded += q * tail;
            } else {
                unknown += q * tail;
            }
        }
        std::mem::swap(&mut state, &mut next);
    }
    ExceedanceResult {
        prob_low: exceeded.min(1.0),
        prob_high: (exceeded + unknown).min(1.0),
        z,
        truncation_tail: budget,
    }
}

/// `prod_i exp(e^t p_i^2 exp(e^t p_i))`, an upper bound on `E exp(t Z_n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MgfBound {
    pub log_value: f64,
    pub value: f64,
    /// `value` overflowed to infinity; `log_value` is still finite.
    pub saturated: bool,
}

pub fn mgf_bound(p: &ProbVector, t: f64) -> Result<MgfBound> {
    if t.is_nan() || t <= 0.0 || t.is_infinite() {
        return Err(invalid("t", t, "must be positive and finite"));
    }
    let et = t.exp();
    let log_value: f64 = p.iter().map(|pi| et * pi * pi * (et * pi).exp()).sum();
    let value = log_value.exp();
    Ok(MgfBound {
        log_value,
        value,
        saturated: value.is_infinite(),
    })
}

/// Exact `E exp(t zeta)` for one index, summed until the terms vanish.
pub fn zeta_mgf(p: f64, t: f64) -> Result<f64> {
    if !(t.is_finite()) {
        return Err(invalid("t", t, "must be finite"));
    }
    let zeta = pmf_zeta(p, 1)?;
    let et = t.exp();
    let mut sum = zeta.mass()[0] + zeta.mass()[1] * et;
    // k >= 2: e^{-p} p^{k+1} / (k+1)! * e^{tk}
    let mut term = (-p).exp() * p * p / 2.0 * et;
    let mut k = 1usize;
    loop {
        k += 1;
        term *= p * et / (k + 1) as f64;
        sum += term;
        let r = p * et / (k + 2) as f64;
        if r < 0.5 && term <= sum * 1e-18 {
            return Ok(sum + term * r / (1.0 - r));
        }
    }
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::dist::pmf_zeta;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn zeta_sum_single_index_is_zeta() {
        let a = pmf_zeta_sum(&pv(&[0.4]), 20);
        let b = pmf_zeta(0.4, 20).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zeta_sum_zero_point_is_product() {
        let a = pmf_zeta_sum(&pv(&[0.5, 0.5]), 20);
        let m0 = 1.0 - 0.5 * (1.0 - (-0.5f64).exp());
        assert!((a.mass()[0] - m0 * m0).abs() < 1e-15);
    }

    #[test]
    fn zeta_sum_matches_triple_sum() {
        let p = [0.1, 0.2, 0.3];
        let laws: Vec<_> = p.iter().map(|&x| pmf_zeta(x, 20).unwrap()).collect();
        let mut brute = [0.0; 21];
        for i in 0..=20 {
            for j in 0..=20 {
                for k in 0..=20 {
                    if i + j + k <= 20 {
                        brute[i + j + k] += laws[0].get(i) * laws[1].get(j) * laws[2].get(k);
                    }
                }
            }
        }
        let conv = pmf_zeta_sum(&pv(&p), 20);
        for s in 0..=20 {
            assert!((conv.get(s) - brute[s]).abs() < 1e-12, "s={s}");
        }
        assert!((conv.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zeta_sum_tail_tracks_truncation() {
        let small = pmf_zeta_sum(&pv(&[0.9, 0.8, 0.7]), 2);
        let big = pmf_zeta_sum(&pv(&[0.9, 0.8, 0.7]), 40);
        assert!((small.tail() - big.upper_sum(3)).abs() < 1e-15);
    }

    #[test]
    fn q_tail_single_index() {
        let q = q_tail(&pv(&[0.3]), 2).unwrap();
        // P(zeta >= 2) = P(pi >= 3) = 1 - e^{-.3}(1 + .3 + .045)
        let mut term = (-0.3f64).exp() * 0.3f64.powi(3) / 6.0;
        let mut direct = 0.0;
        for j in 3..60 {
            direct += term;
            term *= 0.3 / (j + 1) as f64;
        }
        assert!((q.value - direct).abs() < 1e-17);
        assert!(q.radius < 1e-60);
        assert!(q_tail(&pv(&[0.3]), 0).is_err());
    }

    #[test]
    fn q_tail_far_out_is_negligible() {
        let q = q_tail(&pv(&[0.5; 4]), 60).unwrap();
        assert!(q.value < 1e-15);
        assert!(q.radius < 1e-15);
    }

    #[test]
    fn recursion_agrees_with_convolution() {
        let p = pv(&[0.1; 10]);
        let rec = q_tails_by_recursion(&p, 12);
        let law = pmf_zeta_sum(&p, DEFAULT_CAP);
        for k in 1..=12 {
            let conv = q_tail_from(&law, k).value;
            assert!(
                (rec[k] - conv).abs() <= 1e-12 * conv.max(1e-300) + 1e-300,
                "k={k}: {} vs {conv}",
                rec[k]
            );
        }
    }

    #[test]
    fn exceedance_single_index_at_zero() {
        for &p in &[0.01, 0.3, 1.0] {
            let r = exact_exceedance(&pv(&[p]), 0);
            let closed = p * (1.0 - (-p).exp());
            assert!((r.prob_low - closed).abs() < 1e-15, "p={p}");
            assert!(r.width() <= r.truncation_tail);
        }
    }

    #[test]
    fn exceedance_unreachable_threshold() {
        let r = exact_exceedance(&pv(&[0.5; 3]), 200);
        assert_eq!(r.prob_low, 0.0);
        // only truncated cells could still reach the threshold
        assert!(r.prob_high <= r.truncation_tail);
        assert!(r.prob_high < 3e-15);
    }

    #[test]
    fn coarse_cap_widens_bracket_conservatively() {
        let p = pv(&[0.9, 0.8, 0.95]);
        let fine = exact_exceedance(&p, 3);
        let coarse = exact_exceedance_with_cap(&p, 3, Some(2));
        assert!(coarse.prob_low <= fine.prob_low + 1e-15);
        assert!(coarse.prob_high >= fine.prob_high - 1e-15);
        assert!(coarse.width() > 0.0);
        assert!(coarse.width() <= coarse.truncation_tail);
    }

    #[test]
    fn exceedance_below_zeta_tail() {
        let p = pv(&[0.5, 0.9, 0.2, 0.7]);
        let law = pmf_zeta_sum(&p, DEFAULT_CAP);
        for z in 0..6u64 {
            let r = exact_exceedance(&p, z);
            let q = q_tail_from(&law, z as usize + 1);
            assert!(r.prob_high <= q.value + q.radius + 1e-15, "z={z}");
        }
    }

    #[test]
    fn mgf_bound_examples() {
        let b = mgf_bound(&pv(&[0.3]), 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((b.value - (e * 0.09 * (0.3 * e).exp()).exp()).abs() < 1e-14);
        assert!(zeta_mgf(0.3, 1.0).unwrap() <= b.value);

        let tiny = mgf_bound(&pv(&[0.3]), 1e-12).unwrap();
        assert!((tiny.log_value - 0.09 * 0.3f64.exp()).abs() < 1e-10);

        let one = mgf_bound(&pv(&[0.2]), 0.5).unwrap();
        let two = mgf_bound(&pv(&[0.2, 0.2]), 0.5).unwrap();
        assert!((two.value - one.value * one.value).abs() < 1e-14);

        let huge = mgf_bound(&pv(&[1.0]), 5.0).unwrap();
        assert!(huge.saturated && huge.value.is_infinite() && huge.log_value.is_finite());
        assert!(mgf_bound(&pv(&[0.2]), 0.0).is_err());
    }

    #[test]
    fn zeta_mgf_near_zero_is_one() {
        assert!((zeta_mgf(0.4, 0.0).unwrap() - 1.0).abs() < 1e-15);
    }
}
