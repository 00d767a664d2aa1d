//! Bayesian nonparametric test of monotonicity for fixed-design Gaussian
//! regression.
//!
//! Observations `y_i = f(i/n) + eps_i` are modelled with piecewise-constant
//! regression functions on `k` equal-width bins under a conjugate
//! Geometric / Inverse-Gamma / Gaussian prior. The number of bins is sampled
//! with a random-walk Metropolis-Hastings chain, the noise variance and bin
//! levels are drawn exactly from their conditional posteriors, and the test
//! rejects the hypothesis that `f` is non-increasing when the posterior
//! probability that the largest upward jump `H(omega, k)` exceeds the
//! threshold `tau_n^k = M0 * sqrt(k log n / n)` is above
//! `gamma0 / (gamma0 + gamma1)`.
//!
//! Module map:
//!
//! - [`step_model`]: datasets, step functions, binning, the discrepancy `H`.
//! - [`conjugate`]: hyperparameters and closed-form posterior quantities.
//! - [`sampler`]: the Metropolis-Hastings chain over `k`.
//! - [`mono_test`]: threshold calibration, Monte Carlo estimate, decision.
//! - [`calibrate`]: data-driven and simulation-based hyperparameter choice.
//! - [`bayes_factor`]: the Bayes-factor baseline and its flat-truth experiment.
//! - [`simulation`]: benchmark functions, scenarios and rejection tables.
//! - [`ingest`]: text series ingestion.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayes_factor;
pub mod calibrate;
pub mod conjugate;
mod error;
pub mod ingest;
pub mod mono_test;
pub mod par;
pub mod sampler;
pub mod seed;
pub mod simulation;
pub mod step_model;

pub use conjugate::{HyperParams, KPosterior, KTable, PosteriorDraw};
pub use error::{Error, Result};
pub use mono_test::{run_test, SigmaEstimator, TestConfig, TestReport};
pub use par::Execution;
pub use sampler::{run_chain, ChainConfig, ChainOutput};
pub use step_model::{discrepancy, BinStats, Dataset, StepFunction};
