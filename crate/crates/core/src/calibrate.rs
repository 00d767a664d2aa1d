//! Data-driven hyperparameters and Monte Carlo calibration of `(mu, lambda)`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::conjugate::HyperParams;
use crate::error::{domain, Error, Result};
use crate::mono_test::TestConfig;
use crate::par::Execution;
use crate::simulation::{replicate_once, Prior};
use crate::step_model::Dataset;

/// Smallest sample variance used by [`default_data_hyperparams_floored`].
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// `m = mean(y)`, `a = s^2 + 1`, `b = s^4`, with `s^2` the sample variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataHyper {
    pub m: f64,
    pub a: f64,
    pub b: f64,
    pub variance: f64,
    /// Set when the sample variance was below [`VARIANCE_FLOOR`].
    pub floored: bool,
}

impl DataHyper {
    fn from_variance(m: f64, variance: f64, floored: bool) -> Self {
        Self {
            m,
            a: variance + 1.0,
            b: variance * variance,
            variance,
            floored,
        }
    }

    /// Copies `m`, `a`, `b` into `base`.
    pub fn apply(&self, base: &HyperParams) -> HyperParams {
        HyperParams {
            m: self.m,
            a: self.a,
            b: self.b,
            ..base.clone()
        }
    }
}

/// Fails on constant data, where `b = 0` makes the prior improper.
pub fn default_data_hyperparams(data: &Dataset) -> Result<DataHyper> {
    let v = data.variance();
    if !(v > 0.0) {
        return Err(Error::Degenerate(
            "sample variance is zero; data-driven prior undefined".into(),
        ));
    }
    Ok(DataHyper::from_variance(data.mean(), v, false))
}

/// Like [`default_data_hyperparams`], but floors the variance at [`VARIANCE_FLOOR`].
pub fn default_data_hyperparams_floored(data: &Dataset) -> DataHyper {
    let v = data.variance();
    if v < VARIANCE_FLOOR {
        DataHyper::from_variance(data.mean(), VARIANCE_FLOOR, true)
    } else {
        DataHyper::from_variance(data.mean(), v, false)
    }
}

/// Hyperparameters for `data`: data-driven `(m, a, b)`, the given prior and
/// everything else from `base`.
pub fn data_driven(data: &Dataset, prior: Prior, base: &HyperParams) -> HyperParams {
    HyperParams {
        mu: prior.mu,
        lambda: prior.lambda,
        ..default_data_hyperparams_floored(data).apply(base)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSettings {
    /// Ascending candidate values of `mu`.
    pub mu_grid: Vec<f64>,
    /// Ascending candidate values of `lambda`.
    pub lambda_grid: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    pub test: TestConfig,
    pub execution: Execution,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            mu_grid: vec![0.01, 0.05, 0.1, 0.5, 1.0],
            lambda_grid: vec![0.05, 0.1, 0.2, 0.3, 0.5],
            replications: 200,
            seed: 2013,
            test: TestConfig::default(),
            execution: Execution::default(),
        }
    }
}

impl CalibrationSettings {
    fn validate(&self) -> Result<()> {
        for (name, grid) in [("mu", &self.mu_grid), ("lambda", &self.lambda_grid)] {
            if grid.is_empty() {
                return domain(format!("{name} grid is empty"));
            }
            if grid.windows(2).any(|w| w[1] <= w[0]) {
                return domain(format!("{name} grid must be strictly ascending"));
            }
        }
        if self.replications == 0 {
            return domain("calibration needs at least one replication");
        }
        Ok(())
    }
}

/// Estimated type-I error of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCell {
    pub mu: f64,
    pub lambda: f64,
    pub rejections: usize,
    pub replications: usize,
}

impl CalibrationCell {
    pub fn rate(&self) -> f64 {
        self.rejections as f64 / self.replications as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub n: usize,
    pub level: f64,
    pub mu: f64,
    pub lambda: f64,
    /// `true` when no cell met the level; the pair with the fewest
    /// rejections (first in grid order on ties) was taken instead.
    pub fallback: bool,
    /// Cells in `(mu, lambda)` lexicographic order.
    pub cells: Vec<CalibrationCell>,
}

impl CalibrationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,mu,lambda,rejections,replications,rate,selected\n");
        for c in &self.cells {
            let selected = c.mu == self.mu && c.lambda == self.lambda;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.4},{}",
                self.n,
                c.mu,
                c.lambda,
                c.rejections,
                c.replications,
                c.rate(),
                u8::from(selected)
            );
        }
        out
    }
}

/// Picks the lexicographically smallest `(mu, lambda)` whose estimated
/// type-I error under `f = 0`, `sigma = 1` is at most `base.level`.
///
/// Every cell is evaluated on the same simulated datasets and chain seeds,
/// so differences between cells are not sampling noise in the data.
pub fn calibrate_mu_lambda(
    n: usize,
    settings: &CalibrationSettings,
    base: &HyperParams,
) -> Result<CalibrationReport> {
    settings.validate()?;
    base.validate()?;
    let grid: Vec<Prior> = settings
        .mu_grid
        .iter()
        .flat_map(|&mu| {
            settings
                .lambda_grid
                .iter()
                .map(move |&lambda| Prior { mu, lambda })
        })
        .collect();
    let reps = settings.replications;
    let seed = crate::seed::derive_seed(settings.seed, &[n as u64]);
    let outcomes = settings.execution.map_indexed(grid.len() * reps, |task| {
        let (cell, rep) = (task / reps, task % reps);
        replicate_once(|_| 0.0, 1.0, n, seed, rep, grid[cell], base, &settings.test)
            .map(|o| o.delta)
    });
    let mut cells: Vec<CalibrationCell> = grid
        .iter()
        .map(|p| CalibrationCell {
            mu: p.mu,
            lambda: p.lambda,
            rejections: 0,
            replications: reps,
        })
        .collect();
    for (task, delta) in outcomes.into_iter().enumerate() {
        cells[task / reps].rejections += usize::from(delta?);
    }
    let (chosen, fallback) = match cells.iter().find(|c| c.rate() <= base.level) {
        Some(c) => (c, false),
        None => {
            // Type-I error grows with mu here, so the largest pair is the
            // least conservative; fall back to the smallest estimate.
            let best = cells
                .iter()
                .min_by_key(|c| c.rejections)
                .expect("grid is non-empty");
            (best, true)
        }
    };
    Ok(CalibrationReport {
        n,
        level: base.level,
        mu: chosen.mu,
        lambda: chosen.lambda,
        fallback,
        cells: cells.clone(),
    })
}
