use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use monobayes::bayes_factor::{flat_truth_experiment, FlatTruthSettings};
use monobayes::calibrate::{
    calibrate_mu_lambda, data_driven, CalibrationReport, CalibrationSettings,
};
use monobayes::ingest::read_series;
use monobayes::simulation::{
    rejection_table, simulate_dataset, BenchFn, Prior, PriorPolicy, Scenario, ScenarioFile,
    StudySettings,
};
use monobayes::{run_test, ChainConfig, Execution, HyperParams, SigmaEstimator, TestConfig};

#[derive(Parser)]
#[command(
    name = "monobayes",
    version,
    about = "Bayesian nonparametric test of monotonicity"
)]
struct Cli {
    /// Worker threads for replications (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run replications on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test whether a series is monotone.
    Test(TestArgs),
    /// Write a simulated dataset from one of the benchmark functions.
    Simulate(SimulateArgs),
    /// Rejection-rate table over a list of scenarios.
    Bench(BenchArgs),
    /// Choose (mu, lambda) by simulation under a flat truth.
    Calibrate(CalibrateArgs),
    /// Bayes-factor experiment under a flat truth.
    Bf(BfArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Direction {
    NonIncreasing,
    Increasing,
}

#[derive(Clone, Copy, ValueEnum)]
enum SigmaArg {
    ModalK,
    ChainAverage,
}

#[derive(Args, Clone)]
struct ChainArgs {
    /// Chain length K, burn-in included.
    #[arg(long, default_value_t = 5_000)]
    iterations: usize,
    /// Discarded iterations (default: K / 10).
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long, default_value_t = 2013)]
    seed: u64,
}

impl ChainArgs {
    fn chain(&self) -> ChainConfig {
        let mut c = ChainConfig::with_iterations(self.iterations);
        if let Some(b) = self.burn_in {
            c.burn_in = b;
        }
        c.seed = self.seed;
        c
    }
}

#[derive(Args, Clone)]
struct DecisionArgs {
    #[arg(long, default_value_t = 0.05)]
    level: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma0: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma1: f64,
    /// Largest number of bins (default: n / 2).
    #[arg(long)]
    k_max: Option<usize>,
}

impl DecisionArgs {
    fn base(&self) -> HyperParams {
        HyperParams {
            level: self.level,
            gamma0: self.gamma0,
            gamma1: self.gamma1,
            k_max: self.k_max,
            ..HyperParams::default()
        }
    }
}

#[derive(Args, Clone)]
struct CalibrationArgs {
    /// Replications per grid cell when calibrating (mu, lambda).
    #[arg(long, default_value_t = 200)]
    calibration_reps: usize,
    /// Chain length used during calibration (default: --iterations).
    #[arg(long)]
    calibration_iterations: Option<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.05, 0.1, 0.5, 1.0])]
    mu_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1, 0.2, 0.3, 0.5])]
    lambda_grid: Vec<f64>,
}

impl CalibrationArgs {
    fn settings(&self, chain: &ChainArgs, execution: Execution) -> CalibrationSettings {
        let iterations = self.calibration_iterations.unwrap_or(chain.iterations);
        CalibrationSettings {
            mu_grid: self.mu_grid.clone(),
            lambda_grid: self.lambda_grid.clone(),
            replications: self.calibration_reps,
            seed: chain.seed,
            test: TestConfig::from_chain(ChainConfig::with_iterations(iterations)),
            execution,
        }
    }
}

#[derive(Args)]
struct TestArgs {
    /// Series file: one value per line, or `x,y` lines.
    #[arg(long)]
    input: PathBuf,
    /// Monotone direction under the null hypothesis.
    #[arg(long, value_enum, default_value_t = Direction::NonIncreasing)]
    direction: Direction,
    #[command(flatten)]
    chain: ChainArgs,
    #[command(flatten)]
    decision: DecisionArgs,
    #[command(flatten)]
    calibration: CalibrationArgs,
    /// Prior precision scale of the levels (calibrated if omitted).
    #[arg(long)]
    mu: Option<f64>,
    /// Geometric parameter of the prior on k (calibrated if omitted).
    #[arg(long)]
    lambda: Option<f64>,
    /// Prior mean of the levels (default: sample mean).
    #[arg(long)]
    m: Option<f64>,
    /// Inverse-Gamma shape (default: sample variance + 1).
    #[arg(long)]
    a: Option<f64>,
    /// Inverse-Gamma rate (default: squared sample variance).
    #[arg(long)]
    b: Option<f64>,
    #[arg(long, value_enum, default_value_t = SigmaArg::ModalK)]
    sigma_estimator: SigmaArg,
    /// Also write the report as JSON.
    #[arg(long)]
    json_out: Option<PathBuf>,
    /// Write the text report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 2 when monotonicity is rejected.
    #[arg(long)]
    exit_code_decision: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Benchmark function id, 1 to 9.
    #[arg(long)]
    function: u8,
    #[arg(long)]
    n: usize,
    /// Noise variance (default: the function's benchmark value).
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long, default_value_t = 2013)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// TOML file with `[[scenario]]` tables (default: all nine functions
    /// over --n-list).
    #[arg(long)]
    scenarios: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [100, 250, 500, 1000, 2500])]
    n_list: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    replications: usize,
    #[command(flatten)]
    chain: ChainArgs,
    #[command(flatten)]
    decision: DecisionArgs,
    #[command(flatten)]
    calibration: CalibrationArgs,
    /// Fixed mu; with --lambda skips calibration.
    #[arg(long, requires = "lambda")]
    mu: Option<f64>,
    #[arg(long, requires = "mu")]
    lambda: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    chain: ChainArgs,
    #[command(flatten)]
    decision: DecisionArgs,
    #[command(flatten)]
    calibration: CalibrationArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BfArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 0.01)]
    sigma2: f64,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    #[command(flatten)]
    chain: ChainArgs,
    #[command(flatten)]
    decision: DecisionArgs,
    #[command(flatten)]
    calibration: CalibrationArgs,
    #[arg(long, requires = "lambda")]
    mu: Option<f64>,
    #[arg(long, requires = "mu")]
    lambda: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn out_dir(dir: &Path) -> Result<&Path> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn fixed_or_calibrated(
    mu: Option<f64>,
    lambda: Option<f64>,
    n: usize,
    cal: &CalibrationSettings,
    base: &HyperParams,
) -> Result<(Prior, Option<CalibrationReport>)> {
    match (mu, lambda) {
        (Some(mu), Some(lambda)) => Ok((Prior { mu, lambda }, None)),
        _ => {
            let report = calibrate_mu_lambda(n, cal, base)?;
            if report.fallback {
                eprintln!(
                    "warning: no grid pair met level {} at n = {n}; using the largest pair",
                    base.level
                );
            }
            let prior = Prior {
                mu: mu.unwrap_or(report.mu),
                lambda: lambda.unwrap_or(report.lambda),
            };
            Ok((prior, Some(report)))
        }
    }
}

fn cmd_test(args: &TestArgs, execution: Execution) -> Result<ExitCode> {
    let mut data =
        read_series(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    if let Direction::Increasing = args.direction {
        data = data.negated();
    }
    let base = args.decision.base();
    let cal = args.calibration.settings(&args.chain, execution);
    let (prior, report) = fixed_or_calibrated(args.mu, args.lambda, data.n(), &cal, &base)?;
    let mut hp = data_driven(&data, prior, &base);
    if let Some(m) = args.m {
        hp.m = m;
    }
    if let Some(a) = args.a {
        hp.a = a;
    }
    if let Some(b) = args.b {
        hp.b = b;
    }
    let cfg = TestConfig {
        sigma_estimator: match args.sigma_estimator {
            SigmaArg::ModalK => SigmaEstimator::ModalK,
            SigmaArg::ChainAverage => SigmaEstimator::ChainAverage,
        },
        ..TestConfig::from_chain(args.chain.chain())
    };
    let result = run_test(&data, &hp, &cfg)?;

    let mut text = result.to_text();
    let _ = writeln!(
        text,
        "direction: {}",
        match args.direction {
            Direction::NonIncreasing => "non-increasing",
            Direction::Increasing => "increasing",
        }
    );
    let _ = writeln!(
        text,
        "prior_source: {}",
        if report.is_some() {
            "calibrated"
        } else {
            "fixed"
        }
    );
    match &args.out {
        Some(path) => write_file(path, &text)?,
        None => print!("{text}"),
    }
    if let Some(path) = &args.json_out {
        let json = serde_json::json!({
            "report": result,
            "direction": match args.direction {
                Direction::NonIncreasing => "non-increasing",
                Direction::Increasing => "increasing",
            },
            "calibration": report,
        });
        write_file(path, &(serde_json::to_string_pretty(&json)? + "\n"))?;
    }
    if args.exit_code_decision && result.delta {
        Ok(ExitCode::from(2))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let f = BenchFn::new(args.function)?;
    let sigma2 = args.sigma2.unwrap_or_else(|| f.reference_sigma2());
    let mut rng = monobayes::seed::rng_from(args.seed, 0);
    let data = simulate_dataset(|x| f.eval(x), sigma2, args.n, &mut rng)?;
    let mut text = format!(
        "# f{} sigma2={} n={} seed={}\n",
        f.id(),
        sigma2,
        args.n,
        args.seed
    );
    for (i, y) in data.y().iter().enumerate() {
        let _ = writeln!(text, "{},{:.12}", (i + 1) as f64 / args.n as f64, y);
    }
    let path = out_dir(&args.out)?.join(format!("f{}_n{}.csv", f.id(), args.n));
    write_file(&path, &text)?;
    println!("{}", path.display());
    Ok(())
}

fn cmd_bench(args: &BenchArgs, execution: Execution) -> Result<()> {
    let scenarios = match &args.scenarios {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let file: ScenarioFile =
                toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            file.scenarios
        }
        None => BenchFn::ALL
            .iter()
            .flat_map(|&f| {
                args.n_list.iter().map(move |&n| {
                    Scenario::reference(
                        f,
                        n,
                        args.replications,
                        args.chain.iterations,
                        args.chain.seed,
                    )
                })
            })
            .collect(),
    };
    if scenarios.is_empty() {
        bail!("no scenarios to run");
    }
    let prior = match (args.mu, args.lambda) {
        (Some(mu), Some(lambda)) => PriorPolicy::Fixed(Prior { mu, lambda }),
        _ => PriorPolicy::Calibrated(args.calibration.settings(&args.chain, execution)),
    };
    let settings = StudySettings {
        prior,
        base: args.decision.base(),
        test: TestConfig::from_chain(args.chain.chain()),
        execution,
    };
    let table = rejection_table(&scenarios, &settings)?;
    let dir = out_dir(&args.out)?;
    write_file(&dir.join("table.csv"), &table.to_csv())?;
    write_file(&dir.join("table_wide.csv"), &table.to_wide_csv())?;
    write_file(&dir.join("replications.csv"), &table.replications_csv())?;
    for report in &table.calibrations {
        write_file(
            &dir.join(format!("calibration_n{}.csv", report.n)),
            &report.to_csv(),
        )?;
    }
    print!("{}", table.to_wide_csv());
    Ok(())
}

fn cmd_calibrate(args: &CalibrateArgs, execution: Execution) -> Result<()> {
    let base = args.decision.base();
    let report = calibrate_mu_lambda(
        args.n,
        &args.calibration.settings(&args.chain, execution),
        &base,
    )?;
    let dir = out_dir(&args.out)?;
    write_file(
        &dir.join(format!("calibration_n{}.csv", args.n)),
        &report.to_csv(),
    )?;
    write_file(
        &dir.join(format!("calibration_n{}.json", args.n)),
        &(serde_json::to_string_pretty(&report)? + "\n"),
    )?;
    println!("n: {}", report.n);
    println!("mu: {}", report.mu);
    println!("lambda: {}", report.lambda);
    println!("fallback: {}", u8::from(report.fallback));
    Ok(())
}

fn cmd_bf(args: &BfArgs, execution: Execution) -> Result<()> {
    let base = args.decision.base();
    let cal = args.calibration.settings(&args.chain, execution);
    let (prior, report) = fixed_or_calibrated(args.mu, args.lambda, args.n, &cal, &base)?;
    let settings = FlatTruthSettings {
        n: args.n,
        sigma2: args.sigma2,
        replications: args.reps,
        chain: args.chain.chain(),
        seed: args.chain.seed,
        prior,
        base,
        bins: args.bins,
        execution,
    };
    let result = flat_truth_experiment(&settings)?;
    let dir = out_dir(&args.out)?;
    write_file(&dir.join("histogram.csv"), &result.histogram.to_csv())?;
    write_file(&dir.join("log_bf.csv"), &result.values_csv())?;
    if let Some(r) = &report {
        write_file(&dir.join(format!("calibration_n{}.csv", r.n)), &r.to_csv())?;
    }
    println!("mu: {}", prior.mu);
    println!("lambda: {}", prior.lambda);
    println!("replications: {}", args.reps);
    println!("negative_fraction: {:.4}", result.negative_fraction);
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let execution = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match &cli.command {
        Command::Test(args) => return cmd_test(args, execution),
        Command::Simulate(args) => cmd_simulate(args)?,
        Command::Bench(args) => cmd_bench(args, execution)?,
        Command::Calibrate(args) => cmd_calibrate(args, execution)?,
        Command::Bf(args) => cmd_bf(args, execution)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
