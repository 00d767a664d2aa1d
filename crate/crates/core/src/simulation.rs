//! Simulation study: the nine benchmark regression functions, dataset
//! generation, replication scheduling and rejection-rate tables.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::calibrate::{self, CalibrationReport, CalibrationSettings};
use crate::conjugate::HyperParams;
use crate::error::{domain, Result};
use crate::mono_test::{run_test, TestConfig};
use crate::par::Execution;
use crate::sampler::ChainConfig;
use crate::seed::{derive_seed, rng_from};
use crate::step_model::Dataset;

/// One of the nine benchmark regression functions `f_1 .. f_9`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct BenchFn(u8);

impl TryFrom<u8> for BenchFn {
    type Error = crate::Error;

    fn try_from(id: u8) -> Result<Self> {
        BenchFn::new(id)
    }
}

impl From<BenchFn> for u8 {
    fn from(f: BenchFn) -> u8 {
        f.0
    }
}

fn bump(x: f64) -> f64 {
    0.2 * (-50.0 * (x - 0.5) * (x - 0.5)).exp()
}

fn cosine(x: f64) -> f64 {
    -0.5 * (6.0 * PI * x).cos()
}

impl BenchFn {
    pub const ALL: [BenchFn; 9] = [
        BenchFn(1),
        BenchFn(2),
        BenchFn(3),
        BenchFn(4),
        BenchFn(5),
        BenchFn(6),
        BenchFn(7),
        BenchFn(8),
        BenchFn(9),
    ];

    pub fn new(id: u8) -> Result<Self> {
        if (1..=9).contains(&id) {
            Ok(Self(id))
        } else {
            domain(format!("benchmark function id {id} must lie in 1..=9"))
        }
    }

    pub fn id(self) -> u8 {
        self.0
    }

    pub fn eval(self, x: f64) -> f64 {
        match self.0 {
            1 => {
                let cubic = if x <= 0.5 {
                    -15.0 * (x - 0.5).powi(3)
                } else {
                    0.0
                };
                cubic - 0.3 * (x - 0.5) + (-250.0 * (x - 0.25) * (x - 0.25)).exp()
            }
            2 => 0.15 * x,
            3 => bump(x),
            4 => cosine(x),
            5 => -0.2 * x + bump(x),
            6 => -0.2 * x + cosine(x),
            7 => -(1.0 + x) + 0.25 * (-50.0 * (x - 0.5) * (x - 0.5)).exp(),
            8 => -0.5 * x * x,
            9 => 0.0,
            _ => unreachable!("validated in BenchFn::new"),
        }
    }

    /// `f_8` and `f_9` are non-increasing; `f_1 .. f_7` are not.
    pub fn is_non_increasing(self) -> bool {
        self.0 >= 8
    }

    /// Default noise variance of this function in the benchmark study.
    pub fn reference_sigma2(self) -> f64 {
        match self.0 {
            5 => 0.004,
            6 => 0.006,
            _ => 0.01,
        }
    }
}

/// `y_i = f(i/n) + sigma z_i` with `z_i` iid standard normal.
pub fn simulate_dataset<F, R>(f: F, sigma2: f64, n: usize, rng: &mut R) -> Result<Dataset>
where
    F: Fn(f64) -> f64,
    R: Rng + ?Sized,
{
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return domain(format!("sigma2 = {sigma2} must be positive"));
    }
    let sigma = sigma2.sqrt();
    let y = (1..=n)
        .map(|i| {
            let z: f64 = StandardNormal.sample(rng);
            f(i as f64 / n as f64) + sigma * z
        })
        .collect();
    Dataset::new(y)
}

/// Prior constants that are not derived from the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub mu: f64,
    pub lambda: f64,
}

/// Outcome of one simulated replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub rep: usize,
    pub pi_hat: f64,
    pub delta: bool,
    pub modal_k: usize,
    pub m0: f64,
}

/// Simulates replication `rep` and runs the test on it.
///
/// The dataset is drawn from `derive_seed(seed, [rep, 0])` and the chain from
/// `derive_seed(seed, [rep, 1])`, so every prior setting sees the same data
/// and random stream for a given `(seed, rep)`.
#[allow(clippy::too_many_arguments)]
pub fn replicate_once<F: Fn(f64) -> f64>(
    f: F,
    sigma2: f64,
    n: usize,
    seed: u64,
    rep: usize,
    prior: Prior,
    base: &HyperParams,
    test: &TestConfig,
) -> Result<ReplicationOutcome> {
    let mut rng = rng_from(derive_seed(seed, &[rep as u64, 0]), 0);
    let data = simulate_dataset(f, sigma2, n, &mut rng)?;
    let hp = calibrate::data_driven(&data, prior, base);
    let cfg = TestConfig {
        chain: ChainConfig {
            seed: derive_seed(seed, &[rep as u64, 1]),
            ..test.chain.clone()
        },
        ..test.clone()
    };
    let report = run_test(&data, &hp, &cfg)?;
    Ok(ReplicationOutcome {
        rep,
        pi_hat: report.pi_hat,
        delta: report.delta,
        modal_k: report.modal_k,
        m0: report.m0,
    })
}

/// One cell of the simulation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub function: BenchFn,
    pub sigma2: f64,
    pub n: usize,
    pub replications: usize,
    /// Chain length `K`.
    pub iterations: usize,
    pub seed: u64,
}

impl Scenario {
    /// Scenario with the reference noise level of `function`.
    pub fn reference(
        function: BenchFn,
        n: usize,
        replications: usize,
        iterations: usize,
        seed: u64,
    ) -> Self {
        Self {
            function,
            sigma2: function.reference_sigma2(),
            n,
            replications,
            iterations,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return domain(format!("scenario n = {} must be at least 4", self.n));
        }
        if self.replications == 0 {
            return domain("scenario needs at least one replication");
        }
        if !(self.sigma2 > 0.0) {
            return domain("scenario sigma2 must be positive");
        }
        Ok(())
    }

    fn replication_seed(&self) -> u64 {
        derive_seed(self.seed, &[u64::from(self.function.id()), self.n as u64])
    }
}

/// Scenario file layout: a list of `[[scenario]]` tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(rename = "scenario")]
    pub scenarios: Vec<Scenario>,
}

/// Where `(mu, lambda)` come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PriorPolicy {
    Fixed(Prior),
    /// Calibrated once per distinct sample size.
    Calibrated(CalibrationSettings),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySettings {
    pub prior: PriorPolicy,
    /// Decision constants and support of `k`; `m`, `a`, `b`, `mu` and
    /// `lambda` are overwritten per dataset.
    pub base: HyperParams,
    pub test: TestConfig,
    pub execution: Execution,
}

impl Default for StudySettings {
    fn default() -> Self {
        Self {
            prior: PriorPolicy::Calibrated(CalibrationSettings::default()),
            base: HyperParams::default(),
            test: TestConfig::default(),
            execution: Execution::default(),
        }
    }
}

/// Resolves `(mu, lambda)` per sample size, calibrating lazily.
#[derive(Debug, Default)]
pub struct PriorCache {
    reports: BTreeMap<usize, CalibrationReport>,
}

impl PriorCache {
    pub fn prior_for(&mut self, n: usize, settings: &StudySettings) -> Result<Prior> {
        match &settings.prior {
            PriorPolicy::Fixed(p) => Ok(*p),
            PriorPolicy::Calibrated(cal) => {
                let r = match self.reports.entry(n) {
                    Entry::Occupied(e) => e.into_mut(),
                    Entry::Vacant(e) => {
                        e.insert(calibrate::calibrate_mu_lambda(n, cal, &settings.base)?)
                    }
                };
                Ok(Prior {
                    mu: r.mu,
                    lambda: r.lambda,
                })
            }
        }
    }

    pub fn reports(&self) -> impl Iterator<Item = &CalibrationReport> {
        self.reports.values()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub prior: Prior,
    pub rejections: usize,
    pub outcomes: Vec<ReplicationOutcome>,
}

impl ScenarioResult {
    pub fn percent(&self) -> f64 {
        100.0 * self.rejections as f64 / self.scenario.replications as f64
    }
}

/// Runs all replications of one scenario.
pub fn run_scenario(
    scenario: &Scenario,
    prior: Prior,
    settings: &StudySettings,
) -> Result<ScenarioResult> {
    scenario.validate()?;
    let test = TestConfig {
        chain: ChainConfig {
            seed: 0,
            ..ChainConfig::with_iterations(scenario.iterations)
        },
        ..settings.test.clone()
    };
    let f = scenario.function;
    let seed = scenario.replication_seed();
    let outcomes = settings
        .execution
        .map_indexed(scenario.replications, |rep| {
            replicate_once(
                |x| f.eval(x),
                scenario.sigma2,
                scenario.n,
                seed,
                rep,
                prior,
                &settings.base,
                &test,
            )
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let rejections = outcomes.iter().filter(|o| o.delta).count();
    Ok(ScenarioResult {
        scenario: scenario.clone(),
        prior,
        rejections,
        outcomes,
    })
}

/// Rejection percentages for a list of scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionTable {
    pub results: Vec<ScenarioResult>,
    pub calibrations: Vec<CalibrationReport>,
}

impl RejectionTable {
    /// Long format, one line per scenario.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "function,status,sigma2,n,replications,iterations,mu,lambda,rejections,percent\n",
        );
        for r in &self.results {
            let s = &r.scenario;
            let _ = writeln!(
                out,
                "f{},{},{},{},{},{},{},{},{},{:.1}",
                s.function.id(),
                status(s.function),
                s.sigma2,
                s.n,
                s.replications,
                s.iterations,
                r.prior.mu,
                r.prior.lambda,
                r.rejections,
                r.percent()
            );
        }
        out
    }

    /// Wide format: one row per `(function, sigma2)`, one column per `n`.
    pub fn to_wide_csv(&self) -> String {
        let mut ns: Vec<usize> = self.results.iter().map(|r| r.scenario.n).collect();
        ns.sort_unstable();
        ns.dedup();
        let mut rows: BTreeMap<(BenchFn, u64), BTreeMap<usize, f64>> = BTreeMap::new();
        for r in &self.results {
            rows.entry((r.scenario.function, r.scenario.sigma2.to_bits()))
                .or_default()
                .insert(r.scenario.n, r.percent());
        }
        let mut out = String::from("function,status,sigma2");
        for n in &ns {
            let _ = write!(out, ",n={n}");
        }
        out.push('\n');
        for ((f, bits), cells) in &rows {
            let _ = write!(out, "f{},{},{}", f.id(), status(*f), f64::from_bits(*bits));
            for n in &ns {
                match cells.get(n) {
                    Some(p) => {
                        let _ = write!(out, ",{p:.1}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Per-replication log records.
    pub fn replications_csv(&self) -> String {
        let mut out = String::from("function,sigma2,n,rep,pi_hat,delta,modal_k,m0\n");
        for r in &self.results {
            let s = &r.scenario;
            for o in &r.outcomes {
                let _ = writeln!(
                    out,
                    "f{},{},{},{},{:.6},{},{},{:.9}",
                    s.function.id(),
                    s.sigma2,
                    s.n,
                    o.rep,
                    o.pi_hat,
                    u8::from(o.delta),
                    o.modal_k,
                    o.m0
                );
            }
        }
        out
    }
}

fn status(f: BenchFn) -> &'static str {
    if f.is_non_increasing() {
        "monotone"
    } else {
        "non-monotone"
    }
}

/// Runs every scenario; the output depends only on the scenarios and the
/// settings, never on thread scheduling.
pub fn rejection_table(scenarios: &[Scenario], settings: &StudySettings) -> Result<RejectionTable> {
    let mut cache = PriorCache::default();
    let mut results = Vec::with_capacity(scenarios.len());
    for s in scenarios {
        let prior = cache.prior_for(s.n, settings)?;
        results.push(run_scenario(s, prior, settings)?);
    }
    Ok(RejectionTable {
        results,
        calibrations: cache.reports().cloned().collect(),
    })
}

/// One point of an empirical power curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub n: usize,
    pub rejections: usize,
    pub replications: usize,
    pub percent: f64,
}

impl PowerPoint {
    /// Binomial standard error of the rejection percentage.
    pub fn standard_error(&self) -> f64 {
        let p = self.rejections as f64 / self.replications as f64;
        100.0 * (p * (1.0 - p) / self.replications as f64).sqrt()
    }
}

/// Rejection rate of `function` across increasing sample sizes.
pub fn consistency_sweep(
    function: BenchFn,
    n_list: &[usize],
    replications: usize,
    iterations: usize,
    seed: u64,
    settings: &StudySettings,
) -> Result<Vec<PowerPoint>> {
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return domain("sample sizes must be strictly ascending");
    }
    let scenarios: Vec<Scenario> = n_list
        .iter()
        .map(|&n| Scenario::reference(function, n, replications, iterations, seed))
        .collect();
    let table = rejection_table(&scenarios, settings)?;
    Ok(table
        .results
        .iter()
        .map(|r| PowerPoint {
            n: r.scenario.n,
            rejections: r.rejections,
            replications: r.scenario.replications,
            percent: r.percent(),
        })
        .collect())
}
