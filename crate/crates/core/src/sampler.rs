//! Random-walk Metropolis-Hastings over the number of bins, composed with
//! exact conditional draws of `(sigma^2, omega)`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::conjugate::{HyperParams, KPosterior, PosteriorDraw};
use crate::error::{domain, Result};
use crate::seed::rng_from;
use crate::step_model::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Total number of iterations `K`, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Success probability of the geometric step-size distribution.
    pub proposal_p: f64,
    /// Starting number of bins; clamped into the prior support.
    pub k_init: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self::with_iterations(5_000)
    }
}

impl ChainConfig {
    /// `iterations` steps with the default burn-in of `iterations / 10`.
    pub fn with_iterations(iterations: usize) -> Self {
        Self {
            iterations,
            burn_in: iterations / 10,
            seed: 0,
            proposal_p: 0.3,
            k_init: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return domain("chain needs at least one iteration");
        }
        if self.burn_in >= self.iterations {
            return domain(format!(
                "burn-in {} must be smaller than the {} iterations",
                self.burn_in, self.iterations
            ));
        }
        if !(self.proposal_p > 0.0 && self.proposal_p < 1.0) {
            return domain(format!(
                "proposal_p = {} must lie in (0, 1)",
                self.proposal_p
            ));
        }
        if self.k_init == 0 {
            return domain("k_init must be at least 1");
        }
        Ok(())
    }
}

/// Signed step `±(1 + G)` with `G ~ Geometric(p)` counting failures before
/// the first success, and a fair sign.
pub fn propose_step<R: Rng + ?Sized>(p: f64, rng: &mut R) -> i64 {
    let g = Geometric::new(p).expect("p in (0, 1)").sample(rng);
    let magnitude = 1 + g.min(i64::MAX as u64 / 2) as i64;
    if rng.random::<bool>() {
        magnitude
    } else {
        -magnitude
    }
}

/// One Metropolis-Hastings update of `k`. Returns the new state and whether
/// the proposal was accepted.
///
/// Out-of-support proposals are rejected in place. A uniform variate is
/// consumed on every in-support proposal, whatever the outcome, so two
/// chains on equivalent targets stay aligned on the same random stream.
pub fn mh_step<R: Rng + ?Sized>(
    current: usize,
    post: &mut KPosterior<'_>,
    proposal_p: f64,
    rng: &mut R,
) -> Result<(usize, bool)> {
    let step = propose_step(proposal_p, rng);
    let proposed = current as i64 + step;
    if proposed < post.k_min() as i64 || proposed > post.k_max() as i64 {
        return Ok((current, false));
    }
    let proposed = proposed as usize;
    let log_ratio = post.log_post(proposed)? - post.log_post(current)?;
    let u: f64 = rng.random();
    if accepts(log_ratio, u) {
        Ok((proposed, true))
    } else {
        Ok((current, false))
    }
}

/// Metropolis acceptance for a symmetric proposal: `u < min(1, exp(log_ratio))`
/// with `u` uniform on `[0, 1)`.
#[inline]
pub fn accepts(log_ratio: f64, u: f64) -> bool {
    u < log_ratio.exp()
}

/// Draws retained after burn-in plus chain diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub draws: Vec<PosteriorDraw>,
    /// Visits per `k` over the retained draws.
    pub k_histogram: BTreeMap<usize, usize>,
    /// Fraction of all `K` proposals that were accepted.
    pub acceptance_rate: f64,
}

impl ChainOutput {
    /// Most visited `k` (smallest on ties).
    pub fn modal_k(&self) -> usize {
        let mut best = (0usize, 0usize);
        for (&k, &c) in &self.k_histogram {
            if c > best.1 {
                best = (k, c);
            }
        }
        best.0
    }

    pub fn k_frequencies(&self) -> BTreeMap<usize, f64> {
        let total = self.draws.len() as f64;
        self.k_histogram
            .iter()
            .map(|(&k, &c)| (k, c as f64 / total))
            .collect()
    }
}

/// Runs the chain on an already prepared posterior with a caller-provided
/// generator. Each iteration does one MH update of `k`, then draws
/// `sigma^2 | k` and `omega | k, sigma^2`.
pub fn run_chain_on<R: Rng + ?Sized>(
    post: &mut KPosterior<'_>,
    cfg: &ChainConfig,
    rng: &mut R,
) -> Result<ChainOutput> {
    cfg.validate()?;
    let mut k = cfg.k_init.clamp(post.k_min(), post.k_max());
    let mut accepted = 0usize;
    let mut draws = Vec::with_capacity(cfg.iterations - cfg.burn_in);
    let mut k_histogram = BTreeMap::new();
    for it in 0..cfg.iterations {
        let (next, acc) = mh_step(k, post, cfg.proposal_p, rng)?;
        k = next;
        accepted += usize::from(acc);
        let sigma2 = post.sample_sigma2(k, rng)?;
        let omega = post.sample_omega(k, sigma2, rng)?;
        if it >= cfg.burn_in {
            *k_histogram.entry(k).or_insert(0) += 1;
            draws.push(PosteriorDraw { k, sigma2, omega });
        }
    }
    Ok(ChainOutput {
        draws,
        k_histogram,
        acceptance_rate: accepted as f64 / cfg.iterations as f64,
    })
}

/// Runs a chain seeded from `cfg.seed`; the output is a pure function of
/// `(data, hp, cfg)`.
pub fn run_chain(data: &Dataset, hp: &HyperParams, cfg: &ChainConfig) -> Result<ChainOutput> {
    let mut post = KPosterior::new(data, hp)?;
    let mut rng = rng_from(cfg.seed, 0);
    run_chain_on(&mut post, cfg, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conjugate::posterior_k_table;
    use crate::seed::rng_from;
    use rand_distr::StandardNormal;

    #[test]
    fn step_distribution() {
        let mut rng = rng_from(1, 0);
        let n = 100_000;
        let (mut ones, mut positive) = (0usize, 0usize);
        for _ in 0..n {
            let s = propose_step(0.3, &mut rng);
            assert!(s.abs() >= 1);
            ones += usize::from(s.abs() == 1);
            positive += usize::from(s > 0);
        }
        assert!((ones as f64 / n as f64 - 0.3).abs() < 0.01);
        assert!((positive as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    fn noisy_sine(n: usize) -> Dataset {
        let mut rng = rng_from(77, 0);
        let y = (1..=n)
            .map(|i| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (4.0 * i as f64 / n as f64).sin() + 0.5 * z
            })
            .collect();
        Dataset::new(y).unwrap()
    }

    #[test]
    fn out_of_range_proposals_stay_put() {
        let data = noisy_sine(5);
        // Support is the single point {2}: every proposal leaves it.
        let hp = HyperParams::default();
        let mut post = KPosterior::new(&data, &hp).unwrap();
        let mut rng = rng_from(3, 0);
        for _ in 0..200 {
            let (k, acc) = mh_step(2, &mut post, 0.3, &mut rng).unwrap();
            assert_eq!(k, 2);
            assert!(!acc);
        }
    }

    #[test]
    fn equal_log_posterior_always_accepts() {
        for u in [0.0, 0.25, 0.5, 0.999_999_999] {
            assert!(accepts(0.0, u));
            assert!(accepts(1e-300, u));
        }
        assert!(!accepts(f64::NEG_INFINITY, 0.0));
        assert!(accepts((0.5f64).ln(), 0.49));
        assert!(!accepts((0.5f64).ln(), 0.51));
    }

    #[test]
    fn in_range_uphill_moves_are_taken() {
        // Support {2, 3}: from the lower-mass state every in-range proposal
        // is uphill and must be accepted.
        let data = noisy_sine(6);
        let hp = HyperParams {
            k_max: Some(3),
            ..HyperParams::default()
        };
        let mut post = KPosterior::new(&data, &hp).unwrap();
        let (l2, l3) = (post.log_post(2).unwrap(), post.log_post(3).unwrap());
        let (lo, hi) = if l2 < l3 { (2, 3) } else { (3, 2) };
        let mut rng = rng_from(5, 0);
        for _ in 0..500 {
            let (k, acc) = mh_step(lo, &mut post, 0.3, &mut rng).unwrap();
            assert_eq!(acc, k == hi);
        }
        // The proposal +-1 has probability 0.3, half of it in range.
        let moved = (0..2000)
            .filter(|_| mh_step(lo, &mut post, 0.3, &mut rng).unwrap().0 == hi)
            .count();
        assert!((moved as f64 / 2000.0 - 0.15).abs() < 0.03, "moved {moved}");
    }

    #[test]
    fn same_seed_same_stream() {
        let data = noisy_sine(40);
        let hp = HyperParams::default();
        let cfg = ChainConfig {
            seed: 42,
            ..ChainConfig::with_iterations(500)
        };
        let a = run_chain(&data, &hp, &cfg).unwrap();
        let b = run_chain(&data, &hp, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.draws.len(), 450);
        let other = run_chain(&data, &hp, &ChainConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.draws, other.draws);
    }

    #[test]
    fn chain_frequencies_track_enumeration() {
        let data = noisy_sine(50);
        let hp = HyperParams {
            m: data.mean(),
            lambda: 0.1,
            mu: 0.2,
            ..HyperParams::default()
        };
        let cfg = ChainConfig {
            seed: 9,
            burn_in: 1_000,
            ..ChainConfig::with_iterations(60_000)
        };
        let out = run_chain(&data, &hp, &cfg).unwrap();
        let table = posterior_k_table(&data, &hp).unwrap();
        let freq = out.k_frequencies();
        let tv: f64 = (table.k_min..=table.k_max())
            .map(|k| (freq.get(&k).copied().unwrap_or(0.0) - table.prob(k)).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.03, "tv = {tv}");
        assert!(out.acceptance_rate > 0.05 && out.acceptance_rate < 0.95);
    }

    #[test]
    fn config_validation() {
        assert!(ChainConfig::with_iterations(0).validate().is_err());
        let bad = ChainConfig {
            burn_in: 10,
            ..ChainConfig::with_iterations(10)
        };
        assert!(bad.validate().is_err());
        assert!(ChainConfig::default().validate().is_ok());
    }
}
