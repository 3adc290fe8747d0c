//! `bounds` and `simulate`: one row per `(instance, z)`.

use bernpois::bounds::{thm1_iid, Thm1Constants};
use bernpois::coupling::estimate_tails;
use bernpois::{assemble_report, BoundName, McEstimate, ProbVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, OutputFormat};
use crate::render::{fmt_bool, fmt_f64, fmt_opt};

/// Half-widths of the Wilson interval allowed between estimate and exact bracket.
pub const AGREEMENT_RADII: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCell {
    pub name: BoundName,
    /// Absent when the bound is not evaluated at this `z` or lacks constants.
    pub value: Option<f64>,
    pub applicable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub instance_id: usize,
    pub n: usize,
    pub sum_p: f64,
    pub sum_p2: f64,
    pub z: u64,
    /// Every bound name, in a fixed order.
    pub bounds: Vec<BoundCell>,
    pub exact_low: f64,
    pub exact_high: f64,
    pub q_tail: f64,
    pub mc_point: Option<f64>,
    pub mc_ci_low: Option<f64>,
    pub mc_ci_high: Option<f64>,
    pub mc_agreement: Option<bool>,
    pub sandwich_ok: bool,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub command: &'static str,
    pub seed: u64,
    /// Paths per instance; absent for `bounds`.
    pub mc_samples: Option<u64>,
    pub rows: Vec<Row>,
}

impl SweepReport {
    /// Problems that make the run exit with status 3.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for r in &self.rows {
            if !r.sandwich_ok {
                out.push(format!(
                    "instance {} z={}: sandwich failed ({})",
                    r.instance_id,
                    r.z,
                    r.violations.join("; ")
                ));
            }
            if r.mc_agreement == Some(false) {
                out.push(format!(
                    "instance {} z={}: Monte Carlo interval misses the exact bracket",
                    r.instance_id, r.z
                ));
            }
        }
        out
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Json => {
                let mut s = serde_json::to_string_pretty(self).expect("report is serializable");
                s.push('\n');
                s
            }
            OutputFormat::Csv => self.to_csv(),
        }
    }

    fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(csv_header()).expect("writing to memory");
        for r in &self.rows {
            let mut rec = vec![
                r.instance_id.to_string(),
                r.n.to_string(),
                fmt_f64(r.sum_p),
                fmt_f64(r.sum_p2),
                r.z.to_string(),
            ];
            for b in &r.bounds {
                rec.push(fmt_opt(b.value, fmt_f64));
                rec.push(fmt_bool(b.applicable));
            }
            rec.extend([
                fmt_f64(r.exact_low),
                fmt_f64(r.exact_high),
                fmt_f64(r.q_tail),
                fmt_opt(r.mc_point, fmt_f64),
                fmt_opt(r.mc_ci_low, fmt_f64),
                fmt_opt(r.mc_ci_high, fmt_f64),
                fmt_opt(r.mc_agreement, fmt_bool),
                fmt_bool(r.sandwich_ok),
            ]);
            w.write_record(&rec).expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("flushing to memory")).expect("csv output is utf-8")
    }
}

/// Column names of the CSV report, in order.
pub fn csv_header() -> Vec<String> {
    let mut h: Vec<String> = ["instance_id", "n", "sum_p", "sum_p2", "z"]
        .map(String::from)
        .to_vec();
    for name in BoundName::ALL {
        h.push(format!("{name}_value"));
        h.push(format!("{name}_applicable"));
    }
    h.extend(
        [
            "exact_low",
            "exact_high",
            "q_tail",
            "mc_point",
            "mc_ci_low",
            "mc_ci_high",
            "mc_agreement",
            "sandwich_ok",
        ]
        .map(String::from),
    );
    h
}

pub fn cmd_bounds(config: &ExperimentConfig) -> SweepReport {
    sweep(config, false)
}

pub fn cmd_simulate(config: &ExperimentConfig) -> SweepReport {
    sweep(config, true)
}

fn sweep(config: &ExperimentConfig, simulate: bool) -> SweepReport {
    let instances = config.instances();
    let rows: Vec<Vec<Row>> = instances
        .par_iter()
        .enumerate()
        .map(|(id, p)| instance_rows(config, id, p, simulate))
        .collect();
    SweepReport {
        command: if simulate { "simulate" } else { "bounds" },
        seed: config.seed,
        mc_samples: simulate.then_some(config.mc_samples),
        rows: rows.into_iter().flatten().collect(),
    }
}

fn instance_rows(config: &ExperimentConfig, id: usize, p: &ProbVector, simulate: bool) -> Vec<Row> {
    let mc: Option<Vec<McEstimate>> = simulate.then(|| {
        estimate_tails(p, &config.z_values, config.mc_samples, config.mc_seed(id))
            .expect("validated config has mc_samples >= 1")
    });
    config
        .z_values
        .iter()
        .enumerate()
        .map(|(j, &z)| {
            let report = assemble_report(p, z);
            let mut bounds: Vec<BoundCell> = BoundName::ALL
                .iter()
                .map(|&name| match report.bound(name) {
                    Some(b) => BoundCell {
                        name,
                        value: Some(b.value),
                        applicable: b.applicable,
                    },
                    None => BoundCell {
                        name,
                        value: None,
                        applicable: false,
                    },
                })
                .collect();
            fill_thm1(&mut bounds, p, z, config.thm1_constants);
            let est = mc.as_ref().map(|m| m[j]);
            Row {
                instance_id: id,
                n: p.len(),
                sum_p: p.sum_p(),
                sum_p2: p.sum_p2(),
                z,
                bounds,
                exact_low: report.exact.prob_low,
                exact_high: report.exact.prob_high,
                q_tail: report.q_tail.value,
                mc_point: est.map(|e| e.point),
                mc_ci_low: est.map(|e| e.ci_low),
                mc_ci_high: est.map(|e| e.ci_high),
                mc_agreement: est.map(|e| {
                    e.agrees_with(
                        report.exact.prob_low,
                        report.exact.prob_high,
                        AGREEMENT_RADII,
                    )
                }),
                sandwich_ok: report.sandwich_ok,
                violations: report.violations,
            }
        })
        .collect()
}

/// The i.i.d. bounds apply only to constant vectors and need explicit constants.
fn fill_thm1(cells: &mut [BoundCell], p: &ProbVector, z: u64, c: Option<Thm1Constants>) {
    let first = p.as_slice()[0];
    if c.is_none() || p.iter().any(|x| x != first) {
        return;
    }
    let Ok((large, small)) = thm1_iid(p.len(), first, z, c) else {
        return;
    };
    for b in [large, small] {
        if let Some(cell) = cells.iter_mut().find(|x| x.name == b.name) {
            cell.value = Some(b.value);
            cell.applicable = b.applicable;
        }
    }
}
