//! Closed-form posterior quantities under the conjugate prior
//!
//! ```text
//! k           ~ Geometric(lambda) on {k_min, k_min + 1, ...}, truncated at k_max
//! sigma^2 | k ~ InvGamma(a, b)                  (shape a, rate b)
//! omega_j | k, sigma^2 ~ iid N(m, sigma^2 / mu)
//! ```
//!
//! Given `k`, the posterior of `sigma^2` is `InvGamma(a + n/2, b_tilde_k)` and
//! the levels are independent Gaussians, so the only quantity that needs
//! MCMC is `k` itself. Its unnormalized log posterior is
//!
//! ```text
//! log pi(k) - (a + n/2) log b_tilde_k + (k/2) log mu - 1/2 sum_j log(n_j + mu)
//! ```

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Result};
use crate::step_model::{bin_stats, BinStats, Dataset};

/// Prior constants and decision constants of the test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Success probability of the geometric prior on `k`.
    pub lambda: f64,
    /// Inverse-Gamma shape.
    pub a: f64,
    /// Inverse-Gamma rate.
    pub b: f64,
    /// Prior mean of the levels.
    pub m: f64,
    /// Prior precision scale of the levels (prior variance `sigma^2 / mu`).
    pub mu: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    /// Target type-I error used to calibrate `M0`.
    pub level: f64,
    /// Smallest number of bins in the support of the prior on `k`.
    pub k_min: usize,
    /// Optional cap on `k`; `None` means `max(k_min, n / 2)`.
    pub k_max: Option<usize>,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            a: 2.0,
            b: 1.0,
            m: 0.0,
            mu: 0.01,
            gamma0: 0.5,
            gamma1: 0.5,
            level: 0.05,
            k_min: 2,
            k_max: None,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return domain(format!("lambda = {} must lie in (0, 1)", self.lambda));
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return domain(format!("a = {} must be positive", self.a));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return domain(format!("b = {} must be positive", self.b));
        }
        if !self.m.is_finite() {
            return domain("m must be finite");
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return domain(format!("mu = {} must be positive", self.mu));
        }
        if !(self.gamma0 > 0.0 && self.gamma1 > 0.0) {
            return domain("gamma0 and gamma1 must be positive");
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return domain(format!("level = {} must lie in (0, 1)", self.level));
        }
        if self.k_min == 0 {
            return domain("k_min must be at least 1");
        }
        if self.k_max == Some(0) {
            return domain("k_max must be at least 1");
        }
        Ok(())
    }

    /// Support `(k_min, k_max)` of the prior on `k` for `n` observations.
    pub fn k_bounds(&self, n: usize) -> Result<(usize, usize)> {
        let cap = self.k_max.unwrap_or_else(|| (n / 2).max(self.k_min));
        let hi = cap.min(n);
        if self.k_min > hi {
            return domain(format!(
                "empty support for k: k_min = {} exceeds k_max = {hi} (n = {n})",
                self.k_min
            ));
        }
        Ok((self.k_min, hi))
    }

    /// Decision cutoff `gamma0 / (gamma0 + gamma1)`.
    pub fn cutoff(&self) -> f64 {
        self.gamma0 / (self.gamma0 + self.gamma1)
    }

    /// Unnormalized log prior mass of `k`: `log lambda + (k - k_min) log(1 - lambda)`.
    pub fn log_prior_k(&self, k: usize) -> f64 {
        self.lambda.ln() + (k - self.k_min) as f64 * (-self.lambda).ln_1p()
    }

    /// Normalized prior mass of `k` on the truncated support.
    pub fn prior_k(&self, k: usize, n: usize) -> Result<f64> {
        let (lo, hi) = self.k_bounds(n)?;
        if k < lo || k > hi {
            return Ok(0.0);
        }
        let q = 1.0 - self.lambda;
        let total = 1.0 - q.powi((hi - lo + 1) as i32);
        Ok(self.lambda * q.powi((k - lo) as i32) / total)
    }
}

/// One posterior draw `(k, sigma^2, omega)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraw {
    pub k: usize,
    pub sigma2: f64,
    pub omega: Vec<f64>,
}

/// Sufficient quantities for one value of `k`.
#[derive(Debug, Clone)]
pub struct ModelTerms {
    pub stats: BinStats,
    pub b_tilde: f64,
    pub log_post: f64,
}

fn b_tilde_from_stats(stats: &BinStats, hp: &HyperParams) -> f64 {
    let mut acc = 0.0;
    for j in 0..stats.k() {
        let nj = stats.counts[j] as f64;
        let dev = stats.means[j] - hp.m;
        acc += stats.sse[j] + nj * hp.mu / (nj + hp.mu) * dev * dev;
    }
    hp.b + 0.5 * acc
}

fn model_terms(data: &Dataset, k: usize, hp: &HyperParams) -> Result<ModelTerms> {
    let stats = bin_stats(data, k, hp.m)?;
    let b_tilde = b_tilde_from_stats(&stats, hp);
    let shape = hp.a + data.n() as f64 / 2.0;
    let log_bins: f64 = stats.counts.iter().map(|&c| (c as f64 + hp.mu).ln()).sum();
    let log_post =
        hp.log_prior_k(k) - shape * b_tilde.ln() + 0.5 * k as f64 * hp.mu.ln() - 0.5 * log_bins;
    Ok(ModelTerms {
        stats,
        b_tilde,
        log_post,
    })
}

/// Posterior rate `b + 1/2 sum_j [sse_j + n_j mu / (n_j + mu) (ybar_j - m)^2]`.
pub fn b_tilde(data: &Dataset, k: usize, hp: &HyperParams) -> Result<f64> {
    let stats = bin_stats(data, k, hp.m)?;
    Ok(b_tilde_from_stats(&stats, hp))
}

/// Unnormalized log posterior of `k`.
pub fn log_posterior_k_unnorm(data: &Dataset, k: usize, hp: &HyperParams) -> Result<f64> {
    let (lo, hi) = hp.k_bounds(data.n())?;
    if k < lo || k > hi {
        return domain(format!("k = {k} outside the prior support {lo}..={hi}"));
    }
    Ok(model_terms(data, k, hp)?.log_post)
}

/// Exact posterior of `k` over its support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KTable {
    pub k_min: usize,
    pub probs: Vec<f64>,
}

impl KTable {
    pub fn k_max(&self) -> usize {
        self.k_min + self.probs.len() - 1
    }

    pub fn prob(&self, k: usize) -> f64 {
        if k < self.k_min {
            return 0.0;
        }
        self.probs.get(k - self.k_min).copied().unwrap_or(0.0)
    }

    /// Smallest `k` attaining the largest posterior mass.
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        self.k_min + best
    }
}

/// Normalizes log weights with max subtraction.
pub fn normalize_log_weights(log_w: &[f64]) -> Vec<f64> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Posterior of `k` by exhaustive enumeration over the prior support.
pub fn posterior_k_table(data: &Dataset, hp: &HyperParams) -> Result<KTable> {
    let mut post = KPosterior::new(data, hp)?;
    post.table()
}

/// Lazily evaluated posterior over `k` for one dataset.
///
/// Terms for each visited `k` are computed once and cached, so a chain that
/// revisits a handful of models pays the `O(n)` binning cost only once per
/// model.
#[derive(Debug)]
pub struct KPosterior<'a> {
    data: &'a Dataset,
    hp: &'a HyperParams,
    k_min: usize,
    k_max: usize,
    cache: Vec<Option<ModelTerms>>,
}

impl<'a> KPosterior<'a> {
    pub fn new(data: &'a Dataset, hp: &'a HyperParams) -> Result<Self> {
        hp.validate()?;
        let (k_min, k_max) = hp.k_bounds(data.n())?;
        Ok(Self {
            data,
            hp,
            k_min,
            k_max,
            cache: vec![None; k_max - k_min + 1],
        })
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn hyper(&self) -> &'a HyperParams {
        self.hp
    }

    pub fn k_min(&self) -> usize {
        self.k_min
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn contains(&self, k: usize) -> bool {
        (self.k_min..=self.k_max).contains(&k)
    }

    pub fn terms(&mut self, k: usize) -> Result<&ModelTerms> {
        if !self.contains(k) {
            return domain(format!(
                "k = {k} outside the prior support {}..={}",
                self.k_min, self.k_max
            ));
        }
        let slot = k - self.k_min;
        if self.cache[slot].is_none() {
            self.cache[slot] = Some(model_terms(self.data, k, self.hp)?);
        }
        Ok(self.cache[slot].as_ref().expect("filled above"))
    }

    pub fn log_post(&mut self, k: usize) -> Result<f64> {
        Ok(self.terms(k)?.log_post)
    }

    pub fn table(&mut self) -> Result<KTable> {
        let log_w = (self.k_min..=self.k_max)
            .map(|k| self.log_post(k))
            .collect::<Result<Vec<_>>>()?;
        Ok(KTable {
            k_min: self.k_min,
            probs: normalize_log_weights(&log_w),
        })
    }

    pub fn shape(&self) -> f64 {
        self.hp.a + self.data.n() as f64 / 2.0
    }

    pub fn sample_sigma2<R: Rng + ?Sized>(&mut self, k: usize, rng: &mut R) -> Result<f64> {
        let shape = self.shape();
        let b_tilde = self.terms(k)?.b_tilde;
        Ok(draw_inv_gamma(shape, b_tilde, rng))
    }

    pub fn sample_omega<R: Rng + ?Sized>(
        &mut self,
        k: usize,
        sigma2: f64,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if !(sigma2 > 0.0) {
            return domain(format!("sigma2 = {sigma2} must be positive"));
        }
        let (m, mu) = (self.hp.m, self.hp.mu);
        let stats = &self.terms(k)?.stats;
        Ok(draw_levels(stats, m, mu, sigma2, rng))
    }

    pub fn sigma_posterior_mean(&mut self, k: usize) -> Result<f64> {
        let shape = self.shape();
        let b_tilde = self.terms(k)?.b_tilde;
        sigma_mean(shape, b_tilde)
    }
}

fn draw_inv_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0)
        .expect("shape is positive")
        .sample(rng);
    rate / g
}

fn draw_levels<R: Rng + ?Sized>(
    stats: &BinStats,
    m: f64,
    mu: f64,
    sigma2: f64,
    rng: &mut R,
) -> Vec<f64> {
    (0..stats.k())
        .map(|j| {
            let nj = stats.counts[j] as f64;
            // m + n_j (ybar_j - m) / (n_j + mu) == (m mu + n_j ybar_j) / (n_j + mu)
            let mean = m + nj * (stats.means[j] - m) / (nj + mu);
            let sd = (sigma2 / (nj + mu)).sqrt();
            let z: f64 = StandardNormal.sample(rng);
            mean + sd * z
        })
        .collect()
}

fn sigma_mean(shape: f64, b_tilde: f64) -> Result<f64> {
    if !(shape > 0.5) {
        return domain(format!("posterior shape {shape} must exceed 1/2"));
    }
    Ok(b_tilde.sqrt() * (ln_gamma(shape - 0.5) - ln_gamma(shape)).exp())
}

/// Draws `sigma^2 | k, y ~ InvGamma(a + n/2, b_tilde_k)`.
pub fn sample_sigma2_given_k<R: Rng + ?Sized>(
    data: &Dataset,
    k: usize,
    hp: &HyperParams,
    rng: &mut R,
) -> Result<f64> {
    let shape = hp.a + data.n() as f64 / 2.0;
    Ok(draw_inv_gamma(shape, b_tilde(data, k, hp)?, rng))
}

/// Draws the levels independently from
/// `N((m mu + n_j ybar_j) / (n_j + mu), sigma^2 / (n_j + mu))`.
pub fn sample_omega_given_k_sigma<R: Rng + ?Sized>(
    data: &Dataset,
    k: usize,
    sigma2: f64,
    hp: &HyperParams,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(sigma2 > 0.0) {
        return domain(format!("sigma2 = {sigma2} must be positive"));
    }
    let stats = bin_stats(data, k, hp.m)?;
    Ok(draw_levels(&stats, hp.m, hp.mu, sigma2, rng))
}

/// `E[sigma | k, y] = sqrt(b_tilde_k) Gamma(A - 1/2) / Gamma(A)`, `A = a + n/2`.
pub fn sigma_posterior_mean_given_k(data: &Dataset, k: usize, hp: &HyperParams) -> Result<f64> {
    sigma_mean(hp.a + data.n() as f64 / 2.0, b_tilde(data, k, hp)?)
}
