//! Batch front end for `bernpois`: bound sweeps, Monte Carlo cross-checks and
//! the invariant suite, written as CSV or JSON.
//!
//! Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 invariant
//! violation (a failed sandwich, a Monte Carlo disagreement, or a failed
//! `verify` invariant).

#![forbid(unsafe_code)]

pub mod config;
pub mod error;
pub mod render;
pub mod sweep;
pub mod verify;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use bernpois::BoundName;
use clap::{Args, Parser, Subcommand};

pub use config::{Distribution, ExperimentConfig, GeneratorSpec, OutputFormat, PSpec};
pub use error::CliError;
pub use sweep::{cmd_bounds, cmd_simulate, SweepReport};
pub use verify::{cmd_verify, VerifyReport};

/// Environment variable holding the default worker count (0 = all cores).
pub const THREADS_ENV: &str = "BERNPOIS_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "bernpois",
    version,
    about = "Bernoulli-Poisson coupling bounds, exact tails and Monte Carlo checks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate every bound and the exact tails for each (instance, z).
    Bounds(CommonArgs),
    /// As `bounds`, plus Monte Carlo estimates and an agreement verdict.
    Simulate(CommonArgs),
    /// Check the exact-oracle and bound invariants over random instances.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Break one bound's constant to check that the suite notices.
        #[arg(long, hide = true, value_name = "BOUND")]
        debug_corrupt_bound: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON experiment config (optional for `verify`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo paths per instance.
    #[arg(long)]
    pub samples: Option<u64>,
    /// Report path; `-` writes to standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = THREADS_ENV, default_value_t = 0)]
    pub threads: usize,
}

impl CommonArgs {
    fn resolve(&self, verify: bool) -> Result<ExperimentConfig, CliError> {
        let mut c = match (&self.config, verify) {
            (Some(path), _) => ExperimentConfig::from_path(path)?,
            (None, true) => ExperimentConfig::verify_default(),
            (None, false) => {
                return Err(CliError::Config(
                    "--config is required for this command".into(),
                ))
            }
        };
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(n) = self.samples {
            c.mc_samples = n;
        }
        if let Some(f) = self.format {
            c.output_format = f;
        }
        if let Some(out) = &self.out {
            c.output_path = (out.as_os_str() != "-").then(|| out.clone());
        }
        c.validate()?;
        Ok(c)
    }
}

/// Runs `f` on a pool of `threads` workers (0 = one per core).
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Io {
            context: "starting worker threads".into(),
            source: std::io::Error::other(e),
        })?;
    Ok(pool.install(f))
}

fn write_report(config: &ExperimentConfig, text: &str) -> Result<(), CliError> {
    match &config.output_path {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Io {
            context: format!("writing {}", path.display()),
            source,
        }),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Io {
                context: "writing to stdout".into(),
                source,
            }),
    }
}

fn violation(failures: Vec<String>) -> Result<(), CliError> {
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Violation(failures.join("\n")))
    }
}

/// Executes a parsed command; the report is written before any violation is returned.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Bounds(args) => {
            let c = args.resolve(false)?;
            let report = with_threads(args.threads, || cmd_bounds(&c))?;
            write_report(&c, &report.render(c.output_format))?;
            violation(report.failures())
        }
        Command::Simulate(args) => {
            let c = args.resolve(false)?;
            let report = with_threads(args.threads, || cmd_simulate(&c))?;
            write_report(&c, &report.render(c.output_format))?;
            violation(report.failures())
        }
        Command::Verify {
            common,
            debug_corrupt_bound,
        } => {
            let corrupted = match debug_corrupt_bound.as_deref() {
                None => None,
                Some(s) => match BoundName::parse(s) {
                    Some(b) if verify::checked_bound(b) => Some(b),
                    _ => {
                        return Err(CliError::Config(format!(
                            "--debug-corrupt-bound: `{s}` is not a bound checked by verify"
                        )))
                    }
                },
            };
            let c = common.resolve(true)?;
            let report = with_threads(common.threads, || cmd_verify(&c, corrupted))?;
            write_report(&c, &report.render(c.output_format))?;
            violation(
                report
                    .failing()
                    .iter()
                    .map(|s| {
                        format!(
                            "{}: {} of {} checks failed",
                            s.name, s.violations, s.checked
                        )
                    })
                    .collect(),
            )
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("bernpois: {e}");
            e.exit_code()
        }
    }
}
