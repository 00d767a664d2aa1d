//! Bayes factor of the monotone class against its complement, and the
//! flat-truth experiment showing how unstable it is.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::calibrate::data_driven;
use crate::conjugate::{HyperParams, PosteriorDraw};
use crate::error::{domain, Error, Result};
use crate::par::Execution;
use crate::sampler::{run_chain, ChainConfig};
use crate::seed::{derive_seed, rng_from};
use crate::simulation::{simulate_dataset, Prior};
use crate::step_model::discrepancy;

/// `P(omega non-increasing | k) = 1 / k!` for iid continuous levels.
pub fn prob_nonincreasing_given_k(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, j| acc / j as f64)
}

/// Prior mass of the monotone class, `sum_k pi(k) / k!` over the truncated
/// support. Terms vanish faster than any geometric tail, so the sum stops
/// once they drop below `1e-300`.
pub fn prior_prob_monotone(hp: &HyperParams, n: usize) -> Result<f64> {
    let (lo, hi) = hp.k_bounds(n)?;
    let mut inv_fact = prob_nonincreasing_given_k(lo);
    let mut total = 0.0;
    for k in lo..=hi {
        if k > lo {
            inv_fact /= k as f64;
        }
        if inv_fact < 1e-300 {
            break;
        }
        total += hp.prior_k(k, n)? * inv_fact;
    }
    Ok(total.min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogBayesFactor {
    /// `log B`; `+inf` when every draw is monotone, `-inf` when none is.
    pub value: f64,
    pub monotone: usize,
    pub total: usize,
}

impl LogBayesFactor {
    /// Estimated posterior probability of the monotone class.
    pub fn posterior_monotone(&self) -> f64 {
        self.monotone as f64 / self.total as f64
    }

    pub fn is_sentinel(&self) -> bool {
        self.value.is_infinite()
    }
}

/// `log[p / (1 - p)] + log[(1 - prior) / prior]` with the infinite
/// sentinels at `p = 0` and `p = 1`.
pub fn log_bayes_factor_from(
    monotone: usize,
    total: usize,
    prior_monotone: f64,
) -> Result<LogBayesFactor> {
    if total == 0 {
        return Err(Error::EmptyDraws);
    }
    if monotone > total {
        return domain(format!("{monotone} monotone draws out of {total}"));
    }
    if !(prior_monotone > 0.0 && prior_monotone < 1.0) {
        return Err(Error::Degenerate(format!(
            "prior monotone probability {prior_monotone} leaves the Bayes factor undefined"
        )));
    }
    let value = if monotone == total {
        f64::INFINITY
    } else if monotone == 0 {
        f64::NEG_INFINITY
    } else {
        let p = monotone as f64 / total as f64;
        (p.ln() - (-p).ln_1p()) + ((-prior_monotone).ln_1p() - prior_monotone.ln())
    };
    Ok(LogBayesFactor {
        value,
        monotone,
        total,
    })
}

/// Estimates `log B` from chain draws; a draw is monotone when `H = 0`
/// exactly.
pub fn log_bayes_factor(
    draws: &[PosteriorDraw],
    hp: &HyperParams,
    n: usize,
) -> Result<LogBayesFactor> {
    let monotone = draws
        .iter()
        .filter(|d| discrepancy(&d.omega) == 0.0)
        .count();
    log_bayes_factor_from(monotone, draws.len(), prior_prob_monotone(hp, n)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatTruthSettings {
    pub n: usize,
    pub sigma2: f64,
    pub replications: usize,
    pub chain: ChainConfig,
    pub seed: u64,
    pub prior: Prior,
    /// Support of `k` and the remaining constants; `m`, `a`, `b` come from
    /// each dataset.
    pub base: HyperParams,
    /// Number of equal-width histogram bins over the finite values.
    pub bins: usize,
    pub execution: Execution,
}

impl Default for FlatTruthSettings {
    fn default() -> Self {
        Self {
            n: 100,
            sigma2: 0.01,
            replications: 100,
            chain: ChainConfig::with_iterations(5_000),
            seed: 2013,
            prior: Prior {
                mu: 0.01,
                lambda: 0.1,
            },
            base: HyperParams::default(),
            bins: 20,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges; a single degenerate bin `[v, v]` when all finite
    /// values coincide.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub neg_infinite: usize,
    pub pos_infinite: usize,
}

impl Histogram {
    pub fn from_values(values: &[f64], bins: usize) -> Result<Self> {
        if bins == 0 {
            return domain("histogram needs at least one bin");
        }
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        let neg_infinite = values.iter().filter(|&&v| v == f64::NEG_INFINITY).count();
        let pos_infinite = values.iter().filter(|&&v| v == f64::INFINITY).count();
        if values.iter().any(|v| v.is_nan()) {
            return domain("NaN in histogram input");
        }
        let (edges, counts) = if finite.is_empty() {
            (Vec::new(), Vec::new())
        } else {
            let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if lo == hi {
                (vec![lo, hi], vec![finite.len()])
            } else {
                let width = (hi - lo) / bins as f64;
                let mut edges: Vec<f64> = (0..bins).map(|j| lo + j as f64 * width).collect();
                edges.push(hi);
                let mut counts = vec![0; bins];
                for v in &finite {
                    let j = (((v - lo) / width) as usize).min(bins - 1);
                    counts[j] += 1;
                }
                (edges, counts)
            }
        };
        Ok(Self {
            edges,
            counts,
            neg_infinite,
            pos_infinite,
        })
    }

    /// `bin_left,bin_right,count` records; infinite values get their own
    /// rows with both edges equal to the sentinel.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_left,bin_right,count\n");
        if self.neg_infinite > 0 {
            let _ = writeln!(out, "-inf,-inf,{}", self.neg_infinite);
        }
        for (j, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{:.6},{:.6},{}", self.edges[j], self.edges[j + 1], c);
        }
        if self.pos_infinite > 0 {
            let _ = writeln!(out, "inf,inf,{}", self.pos_infinite);
        }
        out
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.neg_infinite + self.pos_infinite
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatTruthResult {
    pub log_bf: Vec<LogBayesFactor>,
    pub histogram: Histogram,
    /// Fraction of replications with `log B < 0`, `-inf` included.
    pub negative_fraction: f64,
}

impl FlatTruthResult {
    pub fn values_csv(&self) -> String {
        let mut out = String::from("rep,log_bf,monotone,total\n");
        for (rep, b) in self.log_bf.iter().enumerate() {
            let _ = writeln!(out, "{rep},{:.6},{},{}", b.value, b.monotone, b.total);
        }
        out
    }
}

/// Simulates `f = 0` datasets and estimates `log B` on each.
pub fn flat_truth_experiment(settings: &FlatTruthSettings) -> Result<FlatTruthResult> {
    if settings.replications == 0 {
        return domain("flat-truth experiment needs at least one replication");
    }
    let n = settings.n;
    let log_bf = settings
        .execution
        .map_indexed(settings.replications, |rep| {
            let rep = rep as u64;
            let mut rng = rng_from(derive_seed(settings.seed, &[rep, 0]), 0);
            let data = simulate_dataset(|_| 0.0, settings.sigma2, n, &mut rng)?;
            let hp = data_driven(&data, settings.prior, &settings.base);
            let cfg = ChainConfig {
                seed: derive_seed(settings.seed, &[rep, 1]),
                ..settings.chain.clone()
            };
            let out = run_chain(&data, &hp, &cfg)?;
            log_bayes_factor(&out.draws, &hp, n)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = log_bf.iter().map(|b| b.value).collect();
    let histogram = Histogram::from_values(&values, settings.bins)?;
    let negative = values.iter().filter(|&&v| v < 0.0).count();
    Ok(FlatTruthResult {
        negative_fraction: negative as f64 / values.len() as f64,
        log_bf,
        histogram,
    })
}
