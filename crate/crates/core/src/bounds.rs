//! Closed-form upper and lower bounds on the minimal distance
//! `d(z) = inf P(max_k |nu_bar(k) - pi_bar(k)| > z)` between the Bernoulli
//! partial-sum process and its accompanying Poisson process, and the
//! sandwich report that checks them against the exact coupling tails.
//!
//! All logarithms are natural. Side conditions are compared exactly on the
//! computed sums; a failed condition leaves the value computed but sets
//! `applicable = false`.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dist::{
    pmf_poisson_binomial, pmf_poisson_default, total_variation, ProbVector, TotalVariation,
};
use crate::error::{invalid, Error, Result};
use crate::exact::{
    exact_exceedance, pmf_zeta_sum, q_tail_from, ExceedanceResult, TailProb, DEFAULT_CAP,
};

/// Relative slack for comparisons between separately rounded quantities.
pub const FLOAT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundName {
    Nc1,
    Nc2,
    Nc3,
    Nc4,
    Nc5Stirling,
    Nc5Combinatorial,
    Nc6,
    BhLower,
    BhUpper,
    Thm1Large,
    Thm1Small,
    Nn1,
    Nn4,
}

impl BoundName {
    pub const ALL: [BoundName; 13] = [
        BoundName::Nc1,
        BoundName::Nc2,
        BoundName::Nc3,
        BoundName::Nc4,
        BoundName::Nc5Stirling,
        BoundName::Nc5Combinatorial,
        BoundName::Nc6,
        BoundName::BhLower,
        BoundName::BhUpper,
        BoundName::Thm1Large,
        BoundName::Thm1Small,
        BoundName::Nn1,
        BoundName::Nn4,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BoundName::Nc1 => "nc1",
            BoundName::Nc2 => "nc2",
            BoundName::Nc3 => "nc3",
            BoundName::Nc4 => "nc4",
            BoundName::Nc5Stirling => "nc5_stirling",
            BoundName::Nc5Combinatorial => "nc5_combinatorial",
            BoundName::Nc6 => "nc6",
            BoundName::BhLower => "bh_lower",
            BoundName::BhUpper => "bh_upper",
            BoundName::Thm1Large => "thm1_large",
            BoundName::Thm1Small => "thm1_small",
            BoundName::Nn1 => "nn1",
            BoundName::Nn4 => "nn4",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.as_str() == s)
    }
}

impl fmt::Display for BoundName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundValue {
    pub name: BoundName,
    pub value: f64,
    pub applicable: bool,
    pub condition: &'static str,
    /// Sharper intermediate quantity from the same argument, where one exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auxiliary: Option<f64>,
}

impl BoundValue {
    fn new(name: BoundName, value: f64, applicable: bool, condition: &'static str) -> Self {
        Self {
            name,
            value,
            applicable,
            condition,
            auxiliary: None,
        }
    }
}

fn sum_pow(p: &ProbVector, e: i32) -> f64 {
    p.iter().map(|x| x.powi(e)).sum()
}

/// `7e6 (p*)^{z+1} exp(-z/2 log log(z+8))`, `p* = max(max p_i, sum p_i^2)`.
pub fn upper_nc1(p: &ProbVector, z: u64) -> BoundValue {
    let s2 = p.sum_p2();
    let p_star = p.max_p().max(s2);
    let zf = z as f64;
    let value = 7e6 * p_star.powi(z as i32 + 1) * (-0.5 * zf * (zf + 8.0).ln().ln()).exp();
    BoundValue::new(BoundName::Nc1, value, s2 <= 1.0, "sum p_i^2 <= 1")
}

/// `1e8 (sum p_i^2)^{(z+2)/2} e^{-z/8}`.
pub fn upper_nc2(p: &ProbVector, z: u64) -> BoundValue {
    let s2 = p.sum_p2();
    let zf = z as f64;
    let value = 1e8 * s2.powf((zf + 2.0) / 2.0) * (-zf / 8.0).exp();
    BoundValue::new(BoundName::Nc2, value, s2 <= 1.0, "sum p_i^2 <= 1")
}

/// `14 sum p_i^{z+2} e^{-z/3}`.
pub fn upper_nc3(p: &ProbVector, z: u64) -> BoundValue {
    let value = 14.0 * sum_pow(p, z as i32 + 2) * (-(z as f64) / 3.0).exp();
    BoundValue::new(BoundName::Nc3, value, p.sum_p() <= 0.5, "sum p_i <= 1/2")
}

/// `d(0) <= sum p_i^2`. The auxiliary field is
/// `1 - prod_i (1 - p_i (1 - e^{-p_i}))`, the exact coupling tail at `z = 0`.
pub fn upper_nc4(p: &ProbVector) -> BoundValue {
    let log_none: f64 = p.iter().map(|x| (x * (-x).exp_m1()).ln_1p()).sum();
    let mut b = BoundValue::new(BoundName::Nc4, p.sum_p2(), true, "always");
    b.auxiliary = Some(-log_none.exp_m1());
    b
}

/// `sum_k B_k p_k^{z+2}` with `B_k = exp(-sum_{i<=k} p_i) prod_{j<k} p_j`.
fn nc5_core(p: &ProbVector, z: u64) -> f64 {
    let mut prefix_sum = 0.0;
    let mut prefix_prod = 1.0;
    let mut total = 0.0;
    for x in p.iter() {
        prefix_sum += x;
        total += (-prefix_sum).exp() * prefix_prod * x.powi(z as i32 + 2);
        prefix_prod *= x;
    }
    total
}

/// Lower bounds from the disjoint events `{pi_1 = .. = pi_{k-1} = 1, pi_k = z + 2}`:
/// the exact `(1/(z+2)!) sum B_k p_k^{z+2}` and its Stirling relaxation
/// `(2 pi)^{-1/2} exp(-(z+3) log(z+2) + z) sum B_k p_k^{z+2}`.
pub fn lower_nc5(p: &ProbVector, z: u64) -> (BoundValue, BoundValue) {
    let core = nc5_core(p, z);
    let zf = z as f64;
    let stirling = core * (-(zf + 3.0) * (zf + 2.0).ln() + zf).exp() / (2.0 * PI).sqrt();
    let inv_fact: f64 = (1..=z + 2).map(|j| 1.0 / j as f64).product();
    (
        BoundValue::new(BoundName::Nc5Stirling, stirling, true, "always"),
        BoundValue::new(BoundName::Nc5Combinatorial, core * inv_fact, true, "always"),
    )
}

/// `log(1 + p) - p` without cancellation for small `p`.
fn log1p_minus(p: f64) -> f64 {
    if p >= 0.1 {
        return p.ln_1p() - p;
    }
    // sum_{j >= 2} (-1)^{j+1} p^j / j
    let mut pow = p * p;
    let mut sum = 0.0f64;
    let mut j = 2.0;
    let mut sign = -1.0;
    while pow / j > sum.abs() * 1e-18 {
        sum += sign * pow / j;
        pow *= p;
        j += 1.0;
        sign = -sign;
    }
    sum
}

/// `1 - exp(-1/2 sum p_i^2 (1 - p_i))`; auxiliary `1 - prod e^{-p_i}(1 + p_i)`.
pub fn lower_nc6(p: &ProbVector) -> BoundValue {
    let s: f64 = p.iter().map(|x| x * x * (1.0 - x)).sum();
    let mut b = BoundValue::new(BoundName::Nc6, -(-0.5 * s).exp_m1(), true, "always");
    let log_prod: f64 = p.iter().map(log1p_minus).sum();
    b.auxiliary = Some(-log_prod.exp_m1());
    b
}

/// Two-sided estimate of the end-point distance `TV(sum nu_i, Poisson(sum p_i))`:
/// `[eps sum p_i^2 / 32, eps sum p_i^2]` with `eps = min(1, 1/sum p_i)`.
pub fn barbour_hall(p: &ProbVector) -> (BoundValue, BoundValue) {
    let eps = (1.0 / p.sum_p()).min(1.0);
    let core = eps * p.sum_p2();
    (
        BoundValue::new(BoundName::BhLower, core / 32.0, true, "always"),
        BoundValue::new(BoundName::BhUpper, core, true, "always"),
    )
}

/// Exact `TV(sum nu_i, Poisson(sum p_i))` with its truncation radius.
pub fn endpoint_total_variation(p: &ProbVector) -> Result<TotalVariation> {
    let binom = pmf_poisson_binomial(p, p.len())?;
    let pois = pmf_poisson_default(p.sum_p())?;
    Ok(total_variation(&binom, &pois))
}

/// Caller-supplied absolute constants for the i.i.d. bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thm1Constants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

/// i.i.d. bounds, parameterized by constants the caller must supply:
/// `(np^2)^{z+1} exp(-C1 z log log(z+2) + C2)` when `np >= 1`, and
/// `n p^{z+2} exp(-C3 z + C4)` when `np <= 1`.
pub fn thm1_iid(
    n: usize,
    p: f64,
    z: u64,
    constants: Option<Thm1Constants>,
) -> Result<(BoundValue, BoundValue)> {
    let c = constants.ok_or(Error::NotEvaluable("thm1_iid"))?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(invalid("p", p, "must lie in (0, 1]"));
    }
    if n == 0 {
        return Err(invalid("n", 0.0, "must be at least 1"));
    }
    let (nf, zf) = (n as f64, z as f64);
    let np = nf * p;
    let large = (nf * p * p).powi(z as i32 + 1) * (-c.c1 * zf * (zf + 2.0).ln().ln() + c.c2).exp();
    let small = nf * p.powi(z as i32 + 2) * (-c.c3 * zf + c.c4).exp();
    Ok((
        BoundValue::new(BoundName::Thm1Large, large, np >= 1.0, "n p >= 1"),
        BoundValue::new(BoundName::Thm1Small, small, np <= 1.0, "n p <= 1"),
    ))
}

/// Induction bound on `Q_n(k)`: `5 e^{-k/8} (sum p_i^2)^{(k+1)/2}`.
pub fn proof_nn1(p: &ProbVector, k: u64) -> BoundValue {
    let s2 = p.sum_p2();
    let kf = k as f64;
    let value = 5.0 * (-kf / 8.0).exp() * s2.powf((kf + 1.0) / 2.0);
    BoundValue::new(
        BoundName::Nn1,
        value,
        k >= 2 && s2 <= 1.0 / 3.0,
        "k >= 2 and sum p_i^2 <= 1/3",
    )
}

/// Induction bound on `Q_n(k)`: `19 sum_i (e^{-1/3} p_i)^{k+1}`.
pub fn proof_nn4(p: &ProbVector, k: u64) -> BoundValue {
    let damp = (-1.0f64 / 3.0).exp();
    let value = 19.0 * p.iter().map(|x| (damp * x).powi(k as i32 + 1)).sum::<f64>();
    BoundValue::new(
        BoundName::Nn4,
        value,
        k >= 2 && p.sum_p() <= 0.5,
        "k >= 2 and sum p_i <= 1/2",
    )
}

/// `a <= b` up to absolute slack `abs` and [`FLOAT_SLACK`] relative slack.
pub fn le_with_slack(a: f64, b: f64, abs: f64) -> bool {
    a <= b + abs + FLOAT_SLACK * b.abs()
}

/// Lower bounds, exact coupling tails and upper bounds for one `(p, z)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub p: ProbVector,
    pub z: u64,
    /// Bounds on `d(z)`; `nc6` is included only at `z = 0`.
    pub lowers: Vec<BoundValue>,
    pub exact: ExceedanceResult,
    /// `Q_n(z + 1)`, which dominates the coupling tail.
    pub q_tail: TailProb,
    /// Bounds on `Q_n(z + 1)`; `nc4` is included only at `z = 0`.
    pub uppers: Vec<BoundValue>,
    /// End-point total variation; `None` when `sum p_i` is too large a
    /// Poisson mean to tabulate.
    pub endpoint_tv: Option<TotalVariation>,
    pub barbour_hall: (BoundValue, BoundValue),
    pub sandwich_ok: bool,
    /// Human-readable description of each failed comparison.
    pub violations: Vec<String>,
}

impl BoundReport {
    pub fn bound(&self, name: BoundName) -> Option<&BoundValue> {
        self.lowers
            .iter()
            .chain(&self.uppers)
            .chain([&self.barbour_hall.0, &self.barbour_hall.1])
            .find(|b| b.name == name)
    }
}

/// Evaluates every bound for `(p, z)` and checks
/// (a) each applicable lower bound `<=` the coupling tail's upper bracket, and
/// (b) `prob_low <= Q_n(z+1)` and `Q_n(z+1) <=` each applicable upper bound.
pub fn assemble_report(p: &ProbVector, z: u64) -> BoundReport {
    let (stirling, combinatorial) = lower_nc5(p, z);
    let mut lowers = vec![stirling, combinatorial];
    if z == 0 {
        lowers.push(lower_nc6(p));
    }

    let exact = exact_exceedance(p, z);
    let law = pmf_zeta_sum(p, (z as usize + 1).max(DEFAULT_CAP));
    let q = q_tail_from(&law, z as usize + 1);

    let mut uppers = vec![upper_nc1(p, z), upper_nc2(p, z), upper_nc3(p, z)];
    if z == 0 {
        uppers.push(upper_nc4(p));
    }
    uppers.push(proof_nn1(p, z + 1));
    uppers.push(proof_nn4(p, z + 1));

    let mut violations = Vec::new();
    for b in lowers.iter().filter(|b| b.applicable) {
        if !le_with_slack(b.value, exact.prob_high, exact.truncation_tail) {
            violations.push(format!(
                "lower {} = {:e} exceeds coupling tail {:e}",
                b.name, b.value, exact.prob_high
            ));
        }
    }
    if !le_with_slack(exact.prob_low, q.value, q.radius) {
        violations.push(format!(
            "coupling tail {:e} exceeds Q(z+1) = {:e}",
            exact.prob_low, q.value
        ));
    }
    for b in uppers.iter().filter(|b| b.applicable) {
        if !le_with_slack(q.value, b.value, 0.0) {
            violations.push(format!(
                "Q(z+1) = {:e} exceeds upper {} = {:e}",
                q.value, b.name, b.value
            ));
        }
    }

    let endpoint_tv = endpoint_total_variation(p).ok();
    BoundReport {
        p: p.clone(),
        z,
        lowers,
        exact,
        q_tail: q,
        uppers,
        endpoint_tv,
        barbour_hall: barbour_hall(p),
        sandwich_ok: violations.is_empty(),
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-13 * b.abs().max(1e-300)
    }

    #[test]
    fn nc1_examples() {
        let p = pv(&[0.3, 0.2]);
        assert!(close(upper_nc1(&p, 0).value, 7e6 * 0.3));
        let p = pv(&[0.1; 10]);
        let b = upper_nc1(&p, 3);
        assert!(close(b.value, 7e6 * 1e-4 * (-1.5 * 11f64.ln().ln()).exp()));
        assert!(b.applicable);
        assert!(!upper_nc1(&pv(&[0.5; 10]), 0).applicable);
    }

    #[test]
    fn nc2_examples() {
        let p = pv(&[0.1; 10]);
        assert!(close(upper_nc2(&p, 0).value, 1e8 * p.sum_p2()));
        assert!(close(
            upper_nc2(&p, 2).value,
            1e8 * p.sum_p2().powi(2) * (-0.25f64).exp()
        ));
        // boundary: sum p_i^2 = 1 exactly
        let b = pv(&[0.5; 4]);
        assert_eq!(b.sum_p2(), 1.0);
        assert!(upper_nc2(&b, 3).applicable);
        assert!(upper_nc1(&b, 3).applicable);
    }

    #[test]
    fn nc3_examples() {
        let p = pv(&[0.1, 0.2]);
        assert!(close(upper_nc3(&p, 0).value, 14.0 * p.sum_p2()));
        let p = pv(&[0.05; 5]);
        assert!(close(
            upper_nc3(&p, 1).value,
            14.0 * 5.0 * 0.05f64.powi(3) * (-1.0f64 / 3.0).exp()
        ));
        assert!(upper_nc3(&p, 1).applicable);
        assert!(!upper_nc3(&pv(&[0.3, 0.3]), 0).applicable);
    }

    #[test]
    fn nc4_examples() {
        assert_eq!(upper_nc4(&pv(&[1.0])).value, 1.0);
        assert!(close(upper_nc4(&pv(&[0.1; 10])).value, 0.1));
        let p = pv(&[0.3, 0.7, 0.01]);
        let b = upper_nc4(&p);
        let union: f64 = p.iter().map(|x| x * (1.0 - (-x).exp())).sum();
        assert!(b.auxiliary.unwrap() <= union && union <= b.value);
    }

    #[test]
    fn nc5_examples() {
        let p1 = 0.4f64;
        let (_, comb) = lower_nc5(&pv(&[p1]), 0);
        assert!(close(comb.value, 0.5 * (-p1).exp() * p1 * p1));

        let p = pv(&[0.1; 10]);
        let (_, comb) = lower_nc5(&p, 0);
        let direct: f64 = (1..=10)
            .map(|k| (-0.1 * k as f64).exp() * 0.1f64.powi(k - 1) * 0.01)
            .sum::<f64>()
            / 2.0;
        assert!(close(comb.value, direct));

        let p = pv(&[0.9, 0.4, 0.7]);
        for z in 0..=40 {
            let (s, c) = lower_nc5(&p, z);
            assert!(s.value <= c.value, "z={z}");
        }
    }

    #[test]
    fn nc6_examples() {
        assert_eq!(lower_nc6(&pv(&[1.0])).value, 0.0);
        let b = lower_nc6(&pv(&[0.1; 10]));
        assert!(close(b.value, 1.0 - (-0.5 * 10.0 * 0.01 * 0.9f64).exp()));
        assert!(b.auxiliary.unwrap() >= b.value);
        let tiny = lower_nc6(&pv(&[1e-9]));
        assert!(tiny.auxiliary.unwrap() >= tiny.value);
    }

    #[test]
    fn log1p_minus_series_matches() {
        for &p in &[0.01f64, 0.05, 0.0999] {
            let direct = p.ln_1p() - p;
            assert!((log1p_minus(p) / direct - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn barbour_hall_examples() {
        let p = pv(&[0.01; 100]);
        let (lo, hi) = barbour_hall(&p);
        assert!(close(hi.value, 0.01));
        assert!(close(lo.value, 0.01 / 32.0));
        let tv = endpoint_total_variation(&p).unwrap();
        assert!(lo.value <= tv.value && tv.value <= hi.value);

        let p = pv(&[1.0]);
        let (lo, hi) = barbour_hall(&p);
        assert_eq!((lo.value, hi.value), (1.0 / 32.0, 1.0));
        let tv = endpoint_total_variation(&p).unwrap();
        // |0 - e^-1| + |1 - e^-1| + (1 - 2 e^-1), halved = 1 - e^-1
        let e = (-1.0f64).exp();
        assert!((tv.value - (1.0 - e)).abs() < 1e-15);
        assert!(lo.value <= tv.value && tv.value <= hi.value);
    }

    #[test]
    fn thm1_requires_constants() {
        assert_eq!(
            thm1_iid(10, 0.1, 0, None),
            Err(Error::NotEvaluable("thm1_iid"))
        );
        let c = Thm1Constants {
            c1: 1.0,
            c2: 0.0,
            c3: 1.0,
            c4: 0.0,
        };
        let (large, small) = thm1_iid(10, 0.1, 0, Some(c)).unwrap();
        assert!(close(large.value, 10.0 * 0.01));
        assert!(close(small.value, 10.0 * 0.01));
        assert!(large.applicable && small.applicable); // np = 1
        let (large, small) = thm1_iid(5, 0.1, 0, Some(c)).unwrap();
        assert!(!large.applicable && small.applicable);
    }

    #[test]
    fn thm1_small_shares_leading_term_with_nc3() {
        let c = Thm1Constants {
            c1: 1.0,
            c2: 0.0,
            c3: 0.0,
            c4: 0.0,
        };
        for z in 0..5 {
            let (_, small) = thm1_iid(8, 0.05, z, Some(c)).unwrap();
            let nc3 = upper_nc3(&pv(&[0.05; 8]), z);
            let lead = nc3.value / (14.0 * (-(z as f64) / 3.0).exp());
            assert!(close(small.value, lead));
        }
    }

    #[test]
    fn bound_names_round_trip() {
        for b in BoundName::ALL {
            assert_eq!(BoundName::parse(b.as_str()), Some(b));
        }
        assert_eq!(BoundName::parse("nope"), None);
    }

    #[test]
    fn report_examples() {
        let r = assemble_report(&pv(&[0.1; 10]), 0);
        assert!(r.sandwich_ok, "{:?}", r.violations);
        assert!(r.bound(BoundName::Nc6).is_some());
        assert!(r.bound(BoundName::Nc4).is_some());

        let r = assemble_report(&pv(&[0.05; 5]), 2);
        assert!(r.sandwich_ok, "{:?}", r.violations);
        assert!(r.bound(BoundName::Nc3).unwrap().applicable);
        assert!(r.bound(BoundName::Nc6).is_none());

        let r = assemble_report(&pv(&[1e-9]), 0);
        assert!(r.sandwich_ok, "{:?}", r.violations);
        assert!(r.exact.prob_high < 1e-17);
        // nc1 carries the 7e6 constant and stays at 7e6 * p
        assert!(r
            .uppers
            .iter()
            .all(|b| b.value <= 7e6 * 1e-9 * (1.0 + 1e-12)));
    }

    #[test]
    fn report_flags_inapplicable_bounds_without_failing() {
        let r = assemble_report(&pv(&[0.5; 10]), 0);
        assert!(!r.bound(BoundName::Nc1).unwrap().applicable);
        assert!(!r.bound(BoundName::Nc2).unwrap().applicable);
        assert!(r.sandwich_ok, "{:?}", r.violations);
    }
}
