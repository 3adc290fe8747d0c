//! `verify`: the exact-oracle and bound-suite invariants over every instance.

use bernpois::bounds::{
    barbour_hall, endpoint_total_variation, le_with_slack, lower_nc5, lower_nc6, proof_nn1,
    proof_nn4, upper_nc1, upper_nc2, upper_nc3, upper_nc4,
};
use bernpois::exact::{
    exact_exceedance, mgf_bound, pmf_zeta_sum, q_tail_from, q_tails_by_recursion, DEFAULT_CAP,
};
use bernpois::{assemble_report, BoundName, BoundValue, ProbVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, OutputFormat};
use crate::render::{fmt_f64, fmt_opt};

const RECURSION_TOL: f64 = 1e-12;
const NC4_SLACK: f64 = 1e-12;
const TV_RADIUS_LIMIT: f64 = 1e-12;
const CHERNOFF_T: [f64; 4] = [0.25, 0.5, 1.0, 2.0];
/// Probability appended when testing monotonicity in the vector.
const APPENDED_P: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Inv {
    BracketOrdered,
    BracketWidth,
    QMonotoneInK,
    QRecursion,
    QAppendMonotone,
    MaxLeZetaSum,
    Chernoff,
    Nc1,
    Nc2,
    Nc3,
    Nc4,
    Nc4Chain,
    Nc5Combinatorial,
    Nc5Stirling,
    Nc6,
    Nc6Auxiliary,
    Nn1,
    Nn4,
    BarbourHall,
    TvRadius,
    Sandwich,
}

const INVARIANTS: [(Inv, &str, &str); 21] = [
    (
        Inv::BracketOrdered,
        "bracket_ordered",
        "0 <= prob_low <= prob_high <= 1",
    ),
    (
        Inv::BracketWidth,
        "bracket_width",
        "prob_high - prob_low <= truncation tail",
    ),
    (Inv::QMonotoneInK, "q_monotone_in_k", "Q(k) <= Q(k-1)"),
    (
        Inv::QRecursion,
        "q_recursion",
        "total-probability recursion equals the convolution within 1e-12",
    ),
    (
        Inv::QAppendMonotone,
        "q_append_monotone",
        "appending an index never decreases Q(z+1)",
    ),
    (
        Inv::MaxLeZetaSum,
        "max_le_zeta_sum",
        "prob_low <= Q(z+1) + radius",
    ),
    (
        Inv::Chernoff,
        "chernoff",
        "Q(z+1) <= mgf_bound(t) e^{-t(z+1)}",
    ),
    (Inv::Nc1, "nc1_upper", "Q(z+1) <= nc1 when sum p_i^2 <= 1"),
    (Inv::Nc2, "nc2_upper", "Q(z+1) <= nc2 when sum p_i^2 <= 1"),
    (Inv::Nc3, "nc3_upper", "Q(z+1) <= nc3 when sum p_i <= 1/2"),
    (
        Inv::Nc4,
        "nc4_upper",
        "exceedance(z=0).prob_high <= sum p_i^2 + 1e-12",
    ),
    (
        Inv::Nc4Chain,
        "nc4_auxiliary_chain",
        "exact z=0 tail <= sum p_i(1-e^{-p_i}) <= sum p_i^2",
    ),
    (
        Inv::Nc5Combinatorial,
        "nc5_combinatorial_lower",
        "nc5 combinatorial <= prob_high + radius",
    ),
    (
        Inv::Nc5Stirling,
        "nc5_stirling_le_combinatorial",
        "nc5 Stirling form <= combinatorial form",
    ),
    (
        Inv::Nc6,
        "nc6_lower",
        "nc6 <= exceedance(z=0).prob_high + radius",
    ),
    (
        Inv::Nc6Auxiliary,
        "nc6_auxiliary",
        "nc6 <= 1 - prod e^{-p_i}(1+p_i)",
    ),
    (
        Inv::Nn1,
        "nn1_upper",
        "Q(k) < 5e^{-k/8}(sum p_i^2)^{(k+1)/2} for k = z+1 >= 2, sum p_i^2 <= 1/3",
    ),
    (
        Inv::Nn4,
        "nn4_upper",
        "Q(k) <= 19 sum (e^{-1/3}p_i)^{k+1} for k = z+1 >= 2, sum p_i <= 1/2",
    ),
    (
        Inv::BarbourHall,
        "barbour_hall_bracket",
        "end-point TV lies in [eps sum p_i^2/32, eps sum p_i^2]",
    ),
    (
        Inv::TvRadius,
        "tv_radius",
        "end-point TV truncation radius < 1e-12",
    ),
    (
        Inv::Sandwich,
        "sandwich",
        "assembled report has sandwich_ok",
    ),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantStat {
    pub name: &'static str,
    pub description: &'static str,
    pub checked: u64,
    pub skipped: u64,
    pub violations: u64,
    /// Smallest `(rhs - lhs) / |rhs|` seen; negative means violated.
    pub worst_margin: Option<f64>,
    pub worst_instance: Option<usize>,
    pub worst_z: Option<u64>,
}

/// Which of the two `Q(z+1)` bounds with the same `sum p_i^2` power is smaller.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Tightness {
    pub compared: u64,
    pub nn1_tighter: u64,
    pub nc2_tighter: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub command: &'static str,
    pub seed: u64,
    pub instances: usize,
    pub z_values: Vec<u64>,
    pub corrupted_bound: Option<BoundName>,
    pub invariants: Vec<InvariantStat>,
    pub tightness: Tightness,
    pub ok: bool,
}

impl VerifyReport {
    pub fn failing(&self) -> Vec<&InvariantStat> {
        self.invariants
            .iter()
            .filter(|s| s.violations > 0)
            .collect()
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Json => {
                let mut s = serde_json::to_string_pretty(self).expect("report is serializable");
                s.push('\n');
                s
            }
            OutputFormat::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record([
                    "invariant",
                    "checked",
                    "skipped",
                    "violations",
                    "worst_margin",
                    "worst_instance",
                    "worst_z",
                ])
                .expect("writing to memory");
                for s in &self.invariants {
                    w.write_record([
                        s.name.to_string(),
                        s.checked.to_string(),
                        s.skipped.to_string(),
                        s.violations.to_string(),
                        fmt_opt(s.worst_margin, fmt_f64),
                        fmt_opt(s.worst_instance, |i| i.to_string()),
                        fmt_opt(s.worst_z, |z| z.to_string()),
                    ])
                    .expect("writing to memory");
                }
                String::from_utf8(w.into_inner().expect("flushing to memory"))
                    .expect("csv output is utf-8")
            }
        }
    }
}

/// Per-instance tallies, merged in instance order.
struct Tally {
    stats: Vec<InvariantStat>,
    tightness: Tightness,
    instance: usize,
}

impl Tally {
    fn new(instance: usize) -> Self {
        let stats = INVARIANTS
            .iter()
            .map(|&(_, name, description)| InvariantStat {
                name,
                description,
                checked: 0,
                skipped: 0,
                violations: 0,
                worst_margin: None,
                worst_instance: None,
                worst_z: None,
            })
            .collect();
        Self {
            stats,
            tightness: Tightness::default(),
            instance,
        }
    }

    fn slot(&mut self, inv: Inv) -> &mut InvariantStat {
        let i = INVARIANTS
            .iter()
            .position(|x| x.0 == inv)
            .expect("every invariant is listed");
        &mut self.stats[i]
    }

    fn skip(&mut self, inv: Inv) {
        self.slot(inv).skipped += 1;
    }

    /// Records `lhs <= rhs` (or the caller's own verdict in `ok`).
    fn record(&mut self, inv: Inv, z: Option<u64>, lhs: f64, rhs: f64, ok: bool) {
        let margin = relative_margin(lhs, rhs);
        let instance = self.instance;
        let s = self.slot(inv);
        s.checked += 1;
        s.violations += u64::from(!ok);
        if s.worst_margin.is_none_or(|w| margin < w) {
            s.worst_margin = Some(margin);
            s.worst_instance = Some(instance);
            s.worst_z = z;
        }
    }

    fn le(&mut self, inv: Inv, z: Option<u64>, lhs: f64, rhs: f64, abs_slack: f64) {
        self.record(inv, z, lhs, rhs, le_with_slack(lhs, rhs, abs_slack));
    }

    fn merge(&mut self, other: Tally) {
        for (a, b) in self.stats.iter_mut().zip(other.stats) {
            a.checked += b.checked;
            a.skipped += b.skipped;
            a.violations += b.violations;
            if let Some(m) = b.worst_margin {
                // ties keep the earlier instance
                if a.worst_margin.is_none_or(|w| m < w) {
                    a.worst_margin = Some(m);
                    a.worst_instance = b.worst_instance;
                    a.worst_z = b.worst_z;
                }
            }
        }
        self.tightness.compared += other.tightness.compared;
        self.tightness.nn1_tighter += other.tightness.nn1_tighter;
        self.tightness.nc2_tighter += other.tightness.nc2_tighter;
    }
}

fn relative_margin(lhs: f64, rhs: f64) -> f64 {
    if rhs.is_infinite() && rhs > 0.0 {
        return f64::INFINITY;
    }
    let diff = rhs - lhs;
    if diff == 0.0 {
        0.0
    } else {
        diff / rhs.abs().max(f64::MIN_POSITIVE)
    }
}

/// A bound value with its constant deliberately broken, for harness self-tests.
fn corrupt(mut b: BoundValue, target: Option<BoundName>) -> BoundValue {
    if target == Some(b.name) {
        let lower = matches!(
            b.name,
            BoundName::Nc5Stirling
                | BoundName::Nc5Combinatorial
                | BoundName::Nc6
                | BoundName::BhLower
        );
        b.value *= if lower { 1e30 } else { 1e-30 };
    }
    b
}

/// Bound names the verify suite checks; others cannot be corrupted usefully.
pub fn checked_bound(name: BoundName) -> bool {
    !matches!(name, BoundName::Thm1Large | BoundName::Thm1Small)
}

pub fn cmd_verify(config: &ExperimentConfig, corrupted: Option<BoundName>) -> VerifyReport {
    let instances = config.instances();
    let tallies: Vec<Tally> = instances
        .par_iter()
        .enumerate()
        .map(|(id, p)| check_instance(id, p, &config.z_values, corrupted))
        .collect();
    let mut total = Tally::new(0);
    for t in tallies {
        total.merge(t);
    }
    let ok = total.stats.iter().all(|s| s.violations == 0);
    VerifyReport {
        command: "verify",
        seed: config.seed,
        instances: instances.len(),
        z_values: config.z_values.clone(),
        corrupted_bound: corrupted,
        invariants: total.stats,
        tightness: total.tightness,
        ok,
    }
}

fn check_instance(id: usize, p: &ProbVector, zs: &[u64], bad: Option<BoundName>) -> Tally {
    let mut t = Tally::new(id);
    let zmax = zs.iter().copied().max().unwrap_or(0) as usize;
    let kmax = (zmax + 2).max(DEFAULT_CAP);
    let law = pmf_zeta_sum(p, kmax);
    let q = |k: usize| q_tail_from(&law, k);

    // whole-vector invariants
    let rec = q_tails_by_recursion(p, zmax + 2);
    for (k, &r) in rec.iter().enumerate().skip(1) {
        let conv = q(k).value;
        t.le(
            Inv::QRecursion,
            Some(k as u64 - 1),
            (r - conv).abs(),
            RECURSION_TOL,
            0.0,
        );
        if k >= 2 {
            t.le(
                Inv::QMonotoneInK,
                Some(k as u64 - 1),
                q(k).value,
                q(k - 1).value,
                0.0,
            );
        }
    }

    let at_zero = exact_exceedance(p, 0);
    let nc4 = corrupt(upper_nc4(p), bad);
    t.le(Inv::Nc4, Some(0), at_zero.prob_high, nc4.value, NC4_SLACK);
    let union: f64 = p.iter().map(|x| -x * (-x).exp_m1()).sum();
    t.le(
        Inv::Nc4Chain,
        Some(0),
        nc4.auxiliary.unwrap_or(0.0),
        union,
        0.0,
    );
    t.le(Inv::Nc4Chain, Some(0), union, nc4.value, 0.0);

    let nc6 = corrupt(lower_nc6(p), bad);
    t.le(
        Inv::Nc6,
        Some(0),
        nc6.value,
        at_zero.prob_high,
        at_zero.truncation_tail,
    );
    t.le(
        Inv::Nc6Auxiliary,
        Some(0),
        nc6.value,
        nc6.auxiliary.unwrap_or(0.0),
        0.0,
    );

    match endpoint_total_variation(p) {
        Ok(tv) => {
            let (lo, hi) = barbour_hall(p);
            let (lo, hi) = (corrupt(lo, bad), corrupt(hi, bad));
            t.le(Inv::BarbourHall, None, lo.value, tv.value, tv.radius);
            t.le(Inv::BarbourHall, None, tv.value, hi.value, tv.radius);
            t.record(
                Inv::TvRadius,
                None,
                tv.radius,
                TV_RADIUS_LIMIT,
                tv.radius < TV_RADIUS_LIMIT,
            );
        }
        Err(_) => {
            t.skip(Inv::BarbourHall);
            t.skip(Inv::TvRadius);
        }
    }

    let appended = p
        .with_appended(APPENDED_P)
        .expect("0.5 is a valid probability");
    let appended_law = pmf_zeta_sum(&appended, kmax);

    for &z in zs {
        let k = z as usize + 1;
        let qk = q(k);
        let ex = exact_exceedance(p, z);
        t.record(
            Inv::BracketOrdered,
            Some(z),
            ex.prob_low,
            ex.prob_high,
            0.0 <= ex.prob_low && ex.prob_low <= ex.prob_high && ex.prob_high <= 1.0,
        );
        t.le(
            Inv::BracketWidth,
            Some(z),
            ex.width(),
            ex.truncation_tail,
            0.0,
        );
        t.le(Inv::MaxLeZetaSum, Some(z), ex.prob_low, qk.value, qk.radius);
        t.le(
            Inv::QAppendMonotone,
            Some(z),
            qk.value,
            q_tail_from(&appended_law, k).value,
            0.0,
        );

        for tt in CHERNOFF_T {
            let m = mgf_bound(p, tt).expect("positive t");
            let rhs = (m.log_value - tt * k as f64).exp();
            t.le(Inv::Chernoff, Some(z), qk.value, rhs, 0.0);
        }

        for (inv, b) in [
            (Inv::Nc1, upper_nc1(p, z)),
            (Inv::Nc2, upper_nc2(p, z)),
            (Inv::Nc3, upper_nc3(p, z)),
        ] {
            let b = corrupt(b, bad);
            if b.applicable {
                t.le(inv, Some(z), qk.value, b.value, 0.0);
            } else {
                t.skip(inv);
            }
        }

        let (stirling, combinatorial) = lower_nc5(p, z);
        let (stirling, combinatorial) = (corrupt(stirling, bad), corrupt(combinatorial, bad));
        t.le(
            Inv::Nc5Combinatorial,
            Some(z),
            combinatorial.value,
            ex.prob_high,
            ex.truncation_tail,
        );
        t.le(
            Inv::Nc5Stirling,
            Some(z),
            stirling.value,
            combinatorial.value,
            0.0,
        );

        let nn1 = corrupt(proof_nn1(p, k as u64), bad);
        if nn1.applicable {
            t.record(Inv::Nn1, Some(z), qk.value, nn1.value, qk.value < nn1.value);
        } else {
            t.skip(Inv::Nn1);
        }
        let nn4 = corrupt(proof_nn4(p, k as u64), bad);
        if nn4.applicable {
            t.le(Inv::Nn4, Some(z), qk.value, nn4.value, 0.0);
        } else {
            t.skip(Inv::Nn4);
        }

        let nc2 = upper_nc2(p, z);
        if nn1.applicable && nc2.applicable {
            t.tightness.compared += 1;
            if nn1.value <= nc2.value {
                t.tightness.nn1_tighter += 1;
            } else {
                t.tightness.nc2_tighter += 1;
            }
        }

        let report = assemble_report(p, z);
        let n_bad = report.violations.len() as f64;
        t.record(Inv::Sandwich, Some(z), n_bad, 0.0, report.sandwich_ok);
    }
    t
}
