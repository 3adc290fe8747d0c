//! Quantile coupling of a Bernoulli partial-sum process with its accompanying
//! Poisson process.
//!
//! - [`dist`]: Poisson, Poisson-binomial and discrepancy laws as truncated pmfs,
//!   generalized inverse cdfs, total variation.
//! - [`coupling`]: quantile and maximal coupling samplers, Monte Carlo tails.
//! - [`exact`]: exact discrepancy-sum tails and path-maximum exceedance.
//! - [`bounds`]: closed-form upper/lower bounds and sandwich reports.

#![forbid(unsafe_code)]

pub mod bounds;
pub mod coupling;
pub mod dist;
pub mod error;
pub mod exact;

pub use bounds::{assemble_report, BoundName, BoundReport, BoundValue};
pub use coupling::{CoupledPath, McEstimate};
pub use dist::{ProbVector, Quantile, TotalVariation, TruncatedPmf};
pub use error::{Error, Result};
pub use exact::{ExceedanceResult, TailProb};
