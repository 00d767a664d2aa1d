//! The decision procedure.
//!
//! A posterior draw `(k, omega)` violates monotonicity when its largest
//! upward jump exceeds `tau_n^k = M0 sqrt(k ln n / n)`. The test rejects
//! when the Monte Carlo estimate of that posterior probability exceeds
//! `gamma0 / (gamma0 + gamma1)`.
//!
//! `M0` is calibrated so that a flat truth is rejected with probability
//! about `level`: `M0 = z_{1-level} sqrt(2) sigma_hat / sqrt(ln n)`, where
//! `sigma_hat` comes from a short pilot chain. The main chain then estimates
//! the exceedance probability with `M0` frozen.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::conjugate::{HyperParams, KPosterior, PosteriorDraw};
use crate::error::{domain, Error, Result};
use crate::sampler::{run_chain_on, ChainConfig};
use crate::seed::rng_from;
use crate::step_model::{discrepancy, Dataset};

/// Threshold `M0 sqrt(k ln n / n)`.
pub fn tau(k: usize, n: usize, m0: f64) -> Result<f64> {
    if n < 2 {
        return domain(format!("tau needs n >= 2, got {n}"));
    }
    if k == 0 {
        return domain("tau needs k >= 1");
    }
    let n = n as f64;
    Ok(m0 * (k as f64 * n.ln() / n).sqrt())
}

/// `M0 = z_{1-level} sqrt(2) sigma_hat / sqrt(ln n)`.
///
/// With this choice `tau_n^k = z_{1-level} sqrt(2) sigma_hat sqrt(k / n)`.
pub fn calibrate_m0(sigma_hat: f64, n: usize, level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return domain(format!("level = {level} must lie in (0, 1)"));
    }
    if n < 2 {
        return domain(format!("M0 needs n >= 2, got {n}"));
    }
    if !(sigma_hat > 0.0 && sigma_hat.is_finite()) {
        return domain(format!("sigma_hat = {sigma_hat} must be positive"));
    }
    let z = Normal::standard().inverse_cdf(1.0 - level);
    Ok(z * std::f64::consts::SQRT_2 * sigma_hat / (n as f64).ln().sqrt())
}

/// Fraction of draws whose discrepancy exceeds `tau(k, n, m0)`.
pub fn estimate_pi_hat(draws: &[PosteriorDraw], n: usize, m0: f64) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    let mut exceed = 0usize;
    for d in draws {
        if discrepancy(&d.omega) > tau(d.k, n, m0)? {
            exceed += 1;
        }
    }
    Ok(exceed as f64 / draws.len() as f64)
}

/// `true` (reject monotonicity) iff `pi_hat > gamma0 / (gamma0 + gamma1)`.
pub fn decide(pi_hat: f64, gamma0: f64, gamma1: f64) -> bool {
    pi_hat > gamma0 / (gamma0 + gamma1)
}

/// How `sigma_hat` is obtained from the pilot chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaEstimator {
    /// `E[sigma | k, y]` at the most visited `k`.
    #[default]
    ModalK,
    /// Average of `sqrt(sigma^2)` over the pilot draws.
    ChainAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub chain: ChainConfig,
    pub sigma_estimator: SigmaEstimator,
    /// Pilot chain length; `None` means `max(1, K / 10)`.
    pub pilot_iterations: Option<usize>,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self::from_chain(ChainConfig::default())
    }
}

impl TestConfig {
    pub fn from_chain(chain: ChainConfig) -> Self {
        Self {
            chain,
            sigma_estimator: SigmaEstimator::default(),
            pilot_iterations: None,
        }
    }

    fn pilot_chain(&self) -> ChainConfig {
        let iterations = self
            .pilot_iterations
            .unwrap_or(self.chain.iterations / 10)
            .max(1);
        ChainConfig {
            iterations,
            burn_in: iterations / 10,
            ..self.chain.clone()
        }
    }
}

/// Outcome of one test run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub n: usize,
    /// Estimated posterior probability that `H(omega, k) > tau_n^k`.
    pub pi_hat: f64,
    /// `true` when monotonicity is rejected.
    pub delta: bool,
    pub cutoff: f64,
    pub m0: f64,
    pub sigma_hat: f64,
    /// Most visited `k` in the pilot chain.
    pub modal_k: usize,
    /// Number of draws entering `pi_hat`.
    pub k_used: usize,
    pub acceptance_rate: f64,
    pub k_histogram: BTreeMap<usize, usize>,
    pub hyper: HyperParams,
}

impl TestReport {
    /// Line-oriented `key: value` rendering with a fixed field order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n: {}", self.n);
        let _ = writeln!(out, "pi_hat: {:.6}", self.pi_hat);
        let _ = writeln!(out, "delta: {}", u8::from(self.delta));
        let _ = writeln!(
            out,
            "decision: {}",
            if self.delta {
                "reject monotonicity"
            } else {
                "monotonicity not rejected"
            }
        );
        let _ = writeln!(out, "cutoff: {:.6}", self.cutoff);
        let _ = writeln!(out, "m0: {:.9}", self.m0);
        let _ = writeln!(out, "sigma_hat: {:.9}", self.sigma_hat);
        let _ = writeln!(out, "modal_k: {}", self.modal_k);
        let _ = writeln!(out, "k_used: {}", self.k_used);
        let _ = writeln!(out, "acceptance_rate: {:.6}", self.acceptance_rate);
        let hist: Vec<String> = self
            .k_histogram
            .iter()
            .map(|(k, c)| format!("{k}:{c}"))
            .collect();
        let _ = writeln!(out, "k_histogram: {}", hist.join(" "));
        let h = &self.hyper;
        let _ = writeln!(out, "lambda: {}", h.lambda);
        let _ = writeln!(out, "mu: {}", h.mu);
        let _ = writeln!(out, "m: {}", h.m);
        let _ = writeln!(out, "a: {}", h.a);
        let _ = writeln!(out, "b: {}", h.b);
        let _ = writeln!(out, "level: {}", h.level);
        out
    }
}

/// Runs the two-pass test: pilot chain for `sigma_hat` and `M0`, then the
/// main chain for `pi_hat`. Both chains derive from `cfg.chain.seed` on
/// separate streams.
pub fn run_test(data: &Dataset, hp: &HyperParams, cfg: &TestConfig) -> Result<TestReport> {
    cfg.chain.validate()?;
    let n = data.n();
    let mut post = KPosterior::new(data, hp)?;

    let pilot_cfg = cfg.pilot_chain();
    let mut pilot_rng = rng_from(cfg.chain.seed, 1);
    let pilot = run_chain_on(&mut post, &pilot_cfg, &mut pilot_rng)?;
    let modal_k = pilot.modal_k();
    let sigma_hat = match cfg.sigma_estimator {
        SigmaEstimator::ModalK => post.sigma_posterior_mean(modal_k)?,
        SigmaEstimator::ChainAverage => {
            pilot.draws.iter().map(|d| d.sigma2.sqrt()).sum::<f64>() / pilot.draws.len() as f64
        }
    };
    let m0 = calibrate_m0(sigma_hat, n, hp.level)?;

    let mut rng = rng_from(cfg.chain.seed, 0);
    let main = run_chain_on(&mut post, &cfg.chain, &mut rng)?;
    let pi_hat = estimate_pi_hat(&main.draws, n, m0)?;
    Ok(TestReport {
        n,
        pi_hat,
        delta: decide(pi_hat, hp.gamma0, hp.gamma1),
        cutoff: hp.cutoff(),
        m0,
        sigma_hat,
        modal_k,
        k_used: main.draws.len(),
        acceptance_rate: main.acceptance_rate,
        k_histogram: main.k_histogram,
        hyper: hp.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn draw(k: usize, omega: Vec<f64>) -> PosteriorDraw {
        PosteriorDraw {
            k,
            sigma2: 1.0,
            omega,
        }
    }

    #[test]
    fn tau_examples() {
        assert!((tau(4, 100, 1.0).unwrap() - 0.429_193_205_257_869_5).abs() < 1e-12);
        assert!(tau(5, 100, 1.0).unwrap() > tau(4, 100, 1.0).unwrap());
        assert_eq!(tau(3, 50, 2.0).unwrap(), 2.0 * tau(3, 50, 1.0).unwrap());
        assert!(tau(3, 1, 1.0).is_err());
    }

    #[test]
    fn m0_examples() {
        assert_eq!(calibrate_m0(1.0, 100, 0.5).unwrap(), 0.0);
        assert!((calibrate_m0(1.0, 100, 0.05).unwrap() - 1.083_975_365_339_592).abs() < 1e-9);
        let m1 = calibrate_m0(0.3, 250, 0.05).unwrap();
        assert!((calibrate_m0(0.6, 250, 0.05).unwrap() - 2.0 * m1).abs() < 1e-15);
        assert!(calibrate_m0(1.0, 100, 1.0).is_err());
        assert!(calibrate_m0(1.0, 100, 0.0).is_err());
    }

    #[test]
    fn log_cancels_in_tau() {
        let (sigma, n, k) = (0.7, 321, 5);
        let m0 = calibrate_m0(sigma, n, 0.05).unwrap();
        let z = Normal::standard().inverse_cdf(0.95);
        let direct = z * 2f64.sqrt() * sigma * (k as f64 / n as f64).sqrt();
        assert!((tau(k, n, m0).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn pi_hat_examples() {
        let flat = vec![draw(3, vec![3.0, 2.0, 1.0]), draw(2, vec![1.0, 1.0])];
        assert_eq!(estimate_pi_hat(&flat, 100, 1.0).unwrap(), 0.0);
        let t = tau(2, 100, 1.0).unwrap();
        let one = vec![draw(2, vec![0.0, 2.0 * t])];
        assert_eq!(estimate_pi_hat(&one, 100, 1.0).unwrap(), 1.0);
        assert!(matches!(
            estimate_pi_hat(&[], 100, 1.0),
            Err(Error::EmptyDraws)
        ));
    }

    #[test]
    fn decide_examples() {
        assert!(decide(0.98, 0.5, 0.5));
        assert!(!decide(0.5, 0.5, 0.5));
        assert!(!decide(0.2, 1.0, 3.0));
        assert!(decide(0.26, 1.0, 3.0));
    }

    #[test]
    fn report_text_has_fixed_order() {
        let report = TestReport {
            n: 10,
            pi_hat: 0.25,
            delta: false,
            cutoff: 0.5,
            m0: 1.0,
            sigma_hat: 0.5,
            modal_k: 2,
            k_used: 4,
            acceptance_rate: 0.5,
            k_histogram: BTreeMap::from([(2, 3), (3, 1)]),
            hyper: HyperParams::default(),
        };
        let text = report.to_text();
        let keys: Vec<&str> = text.lines().map(|l| l.split(':').next().unwrap()).collect();
        assert_eq!(
            &keys[..11],
            &[
                "n",
                "pi_hat",
                "delta",
                "decision",
                "cutoff",
                "m0",
                "sigma_hat",
                "modal_k",
                "k_used",
                "acceptance_rate",
                "k_histogram"
            ]
        );
        assert!(text.contains("k_histogram: 2:3 3:1\n"));
    }

    proptest! {
        #[test]
        fn pi_hat_bounded_and_nonincreasing_in_m0(
            omegas in prop::collection::vec(prop::collection::vec(-1f64..1.0, 1..8), 1..40),
            m0 in 0f64..2.0,
            extra in 0f64..2.0,
        ) {
            let draws: Vec<PosteriorDraw> = omegas.into_iter().map(|w| draw(w.len(), w)).collect();
            let p = estimate_pi_hat(&draws, 50, m0).unwrap();
            let q = estimate_pi_hat(&draws, 50, m0 + extra).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!(q <= p);
        }

        #[test]
        fn decide_monotone_and_scale_free(p in 0f64..1.0, dp in 0f64..0.5, g0 in 0.01f64..5.0, g1 in 0.01f64..5.0, c in 0.01f64..100.0) {
            if decide(p, g0, g1) {
                prop_assert!(decide((p + dp).min(1.0), g0, g1));
            }
            let cut = g0 / (g0 + g1);
            let scaled = (c * g0) / (c * g0 + c * g1);
            // Away from round-off at the cutoff, rescaling gives the same decision.
            if (p - cut).abs() > 1e-12 {
                prop_assert_eq!(decide(p, g0, g1), p > scaled);
                prop_assert_eq!(decide(p, g0, g1), decide(p, c * g0, c * g1));
            }
        }
    }
}
