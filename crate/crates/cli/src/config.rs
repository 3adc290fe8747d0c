//! Experiment configuration: one JSON document, validated with field paths.

use std::path::{Path, PathBuf};

use bernpois::bounds::Thm1Constants;
use bernpois::ProbVector;
use rand::distr::{Distribution as _, Open01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Largest accepted threshold; the exceedance DP allocates `2z + 1` states.
pub const MAX_Z: u64 = 100_000;

const DEFAULT_MC_SAMPLES: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub p_spec: PSpec,
    pub z_values: Vec<u64>,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_format: OutputFormat,
    /// Report destination; standard output when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    /// Constants for the i.i.d. bounds, evaluated only on constant vectors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thm1_constants: Option<Thm1Constants>,
}

fn default_mc_samples() -> u64 {
    DEFAULT_MC_SAMPLES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PSpec {
    /// A single probability vector.
    Explicit(Vec<f64>),
    /// Several probability vectors, one instance each.
    Instances(Vec<Vec<f64>>),
    Generator(GeneratorSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    #[serde(default = "one")]
    pub instances: usize,
    /// Largest vector length.
    pub n: usize,
    /// Smallest vector length; defaults to `n`. Lengths are uniform on `n_min..=n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_min: Option<usize>,
    pub distribution: Distribution,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    /// `p_i` uniform on `(a, b)`.
    Uniform {
        a: f64,
        b: f64,
    },
    /// `log p_i` uniform on `(log a, log b)`.
    LogUniform {
        a: f64,
        b: f64,
    },
    Constant {
        c: f64,
    },
    /// `p_i = r^i` for `i = 1..=n`.
    GeometricDecay {
        r: f64,
    },
    /// Uniform shape rescaled so that `sum p_i^2 = target`.
    ScaledSumSq {
        target: f64,
    },
    /// Uniform shape rescaled so that `sum p_i = target`.
    ScaledSum {
        target: f64,
    },
    /// Each instance picks one of the families above with random parameters.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl ExperimentConfig {
    /// Configuration used by `verify` when no file is given.
    pub fn verify_default() -> Self {
        Self {
            p_spec: PSpec::Generator(GeneratorSpec {
                instances: 200,
                n: 50,
                n_min: Some(1),
                distribution: Distribution::Mixed,
            }),
            z_values: (0..=10).collect(),
            mc_samples: DEFAULT_MC_SAMPLES,
            seed: 0,
            output_format: OutputFormat::Csv,
            output_path: None,
            thm1_constants: None,
        }
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            context: format!("reading config {}", path.display()),
            source,
        })?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Parses and validates; messages carry the JSON path and, for syntax
    /// and type errors, the line and column.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let mut de = serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." {
                CliError::Config(inner.to_string())
            } else {
                CliError::Config(format!("field `{path}`: {inner}"))
            }
        })?;
        de.end().map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let mut issues = Vec::new();
        if self.z_values.is_empty() {
            issues.push("field `z_values`: must be non-empty".to_string());
        }
        for (i, &z) in self.z_values.iter().enumerate() {
            if z > MAX_Z {
                issues.push(format!("field `z_values[{i}]`: {z} exceeds {MAX_Z}"));
            }
        }
        if self.mc_samples == 0 {
            issues.push("field `mc_samples`: must be at least 1".to_string());
        }
        match &self.p_spec {
            PSpec::Explicit(p) => check_vector("p_spec.explicit", p, &mut issues),
            PSpec::Instances(list) => {
                if list.is_empty() {
                    issues.push("field `p_spec.instances`: must be non-empty".to_string());
                }
                for (i, p) in list.iter().enumerate() {
                    check_vector(&format!("p_spec.instances[{i}]"), p, &mut issues);
                }
            }
            PSpec::Generator(g) => g.check(&mut issues),
        }
        if let Some(c) = &self.thm1_constants {
            for (name, v) in [("c1", c.c1), ("c2", c.c2), ("c3", c.c3), ("c4", c.c4)] {
                if !v.is_finite() {
                    issues.push(format!("field `thm1_constants.{name}`: must be finite"));
                }
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(issues.join("; ")))
        }
    }

    /// The probability vectors of the sweep, in instance order.
    ///
    /// Panics on a config that fails [`validate`](Self::validate).
    pub fn instances(&self) -> Vec<ProbVector> {
        let checked = "validated config";
        match &self.p_spec {
            PSpec::Explicit(p) => vec![ProbVector::new(p.clone()).expect(checked)],
            PSpec::Instances(list) => list
                .iter()
                .map(|p| ProbVector::new(p.clone()).expect(checked))
                .collect(),
            PSpec::Generator(g) => (0..g.instances)
                .map(|i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                    rng.set_stream(i as u64);
                    ProbVector::new(g.sample(&mut rng)).expect(checked)
                })
                .collect(),
        }
    }

    /// Monte Carlo seed of instance `id`, decorrelated from the generator streams.
    pub fn mc_seed(&self, id: usize) -> u64 {
        splitmix64(self.seed ^ splitmix64(id as u64 + 1))
    }
}

fn check_vector(field: &str, p: &[f64], issues: &mut Vec<String>) {
    if p.is_empty() {
        issues.push(format!("field `{field}`: must be non-empty"));
    }
    for (i, &x) in p.iter().enumerate() {
        if !(x > 0.0 && x <= 1.0) {
            issues.push(format!("field `{field}[{i}]`: {x} is outside (0, 1]"));
        }
    }
}

impl GeneratorSpec {
    fn check(&self, issues: &mut Vec<String>) {
        let f = "p_spec.generator";
        if self.instances == 0 {
            issues.push(format!("field `{f}.instances`: must be at least 1"));
        }
        if self.n == 0 {
            issues.push(format!("field `{f}.n`: must be at least 1"));
        }
        if let Some(m) = self.n_min {
            if m == 0 || m > self.n {
                issues.push(format!("field `{f}.n_min`: must lie in 1..=n"));
            }
        }
        let d = format!("{f}.distribution");
        let unit = |x: f64| x > 0.0 && x <= 1.0;
        match self.distribution {
            Distribution::Uniform { a, b } if !(0.0 <= a && a < b && b <= 1.0) => {
                issues.push(format!("field `{d}`: uniform needs 0 <= a < b <= 1"))
            }
            Distribution::LogUniform { a, b } if !(0.0 < a && a < b && b <= 1.0) => {
                issues.push(format!("field `{d}`: log_uniform needs 0 < a < b <= 1"))
            }
            Distribution::Constant { c } if !unit(c) => {
                issues.push(format!("field `{d}.c`: {c} is outside (0, 1]"))
            }
            Distribution::GeometricDecay { r } if !unit(r) => {
                issues.push(format!("field `{d}.r`: {r} is outside (0, 1]"))
            }
            Distribution::ScaledSumSq { target } | Distribution::ScaledSum { target }
                if !unit(target) =>
            {
                issues.push(format!("field `{d}.target`: {target} is outside (0, 1]"))
            }
            _ => {}
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let n = rng.random_range(self.n_min.unwrap_or(self.n)..=self.n);
        match self.distribution {
            Distribution::Mixed => sample_family(&random_family(rng), n, rng),
            d => sample_family(&d, n, rng),
        }
    }
}

fn random_family<R: Rng>(rng: &mut R) -> Distribution {
    match rng.random_range(0..6) {
        0 => Distribution::Uniform {
            a: 0.0,
            b: rng.random_range(0.05..=1.0),
        },
        1 => Distribution::LogUniform {
            a: 1e-4,
            b: rng.random_range(1e-3..=1.0),
        },
        2 => Distribution::Constant {
            c: rng.random_range(1e-3..=1.0),
        },
        3 => Distribution::GeometricDecay {
            r: rng.random_range(0.1..0.95),
        },
        // a quarter of these land exactly on the sum p_i^2 = 1 boundary
        4 => Distribution::ScaledSumSq {
            target: if rng.random_bool(0.25) {
                1.0
            } else {
                rng.random_range(0.01..=1.0)
            },
        },
        _ => Distribution::ScaledSum {
            target: rng.random_range(0.01..=0.5),
        },
    }
}

fn sample_family<R: Rng>(d: &Distribution, n: usize, rng: &mut R) -> Vec<f64> {
    let mut unit = || -> f64 { Open01.sample(rng) };
    match *d {
        Distribution::Uniform { a, b } => (0..n).map(|_| a + (b - a) * unit()).collect(),
        Distribution::LogUniform { a, b } => {
            let (la, lb) = (a.ln(), b.ln());
            (0..n)
                .map(|_| (la + (lb - la) * unit()).exp().min(b))
                .collect()
        }
        Distribution::Constant { c } => vec![c; n],
        // floored so deep powers stay valid probabilities
        Distribution::GeometricDecay { r } => {
            (1..=n).map(|i| r.powi(i as i32).max(1e-300)).collect()
        }
        Distribution::ScaledSumSq { target } => {
            let u: Vec<f64> = (0..n).map(|_| unit()).collect();
            let scale = (target / u.iter().map(|x| x * x).sum::<f64>()).sqrt();
            u.iter().map(|x| (x * scale).min(1.0)).collect()
        }
        Distribution::ScaledSum { target } => {
            let u: Vec<f64> = (0..n).map(|_| unit()).collect();
            let scale = target / u.iter().sum::<f64>();
            u.iter().map(|x| (x * scale).min(1.0)).collect()
        }
        Distribution::Mixed => unreachable!("mixed is resolved to a family first"),
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
