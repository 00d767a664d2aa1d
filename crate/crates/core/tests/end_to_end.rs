use monobayes::calibrate::data_driven;
use monobayes::ingest::parse_series;
use monobayes::mono_test::decide;
use monobayes::seed::rng_from;
use monobayes::simulation::{simulate_dataset, BenchFn, Prior};
use monobayes::{run_test, ChainConfig, Dataset, HyperParams, TestConfig, TestReport};

const PRIOR: Prior = Prior {
    mu: 0.01,
    lambda: 0.05,
};

fn test_on(data: &Dataset, base: &HyperParams, seed: u64) -> TestReport {
    let hp = data_driven(data, PRIOR, base);
    let cfg = TestConfig::from_chain(ChainConfig {
        seed,
        ..ChainConfig::with_iterations(3_000)
    });
    run_test(data, &hp, &cfg).unwrap()
}

fn simulated(id: u8, n: usize, seed: u64) -> Dataset {
    let f = BenchFn::new(id).unwrap();
    simulate_dataset(
        |x| f.eval(x),
        f.reference_sigma2(),
        n,
        &mut rng_from(seed, 0),
    )
    .unwrap()
}

#[test]
fn clear_violation_is_rejected() {
    let report = test_on(&simulated(4, 200, 1), &HyperParams::default(), 1);
    assert!(report.delta, "pi_hat = {}", report.pi_hat);
    assert!(report.pi_hat > 0.9);
}

#[test]
fn decreasing_trend_is_not_rejected() {
    let report = test_on(&simulated(8, 200, 2), &HyperParams::default(), 2);
    assert!(!report.delta, "pi_hat = {}", report.pi_hat);
}

#[test]
fn direction_is_handled_by_negation() {
    // An increasing trend violates the non-increasing null but not its mirror.
    let y: Vec<f64> = (1..=150).map(|i| i as f64 / 150.0).collect();
    let mut rng = rng_from(3, 0);
    let noisy = simulate_dataset(|x| x, 0.01, 150, &mut rng).unwrap();
    assert_eq!(noisy.n(), y.len());
    let base = HyperParams::default();
    assert!(test_on(&noisy, &base, 3).delta);
    assert!(!test_on(&noisy.negated(), &base, 3).delta);
}

#[test]
fn cutoff_moves_the_decision() {
    let data = simulated(7, 250, 4);
    let strict = HyperParams {
        gamma0: 1.0,
        gamma1: 3.0,
        ..HyperParams::default()
    };
    let report = test_on(&data, &strict, 4);
    assert_eq!(report.cutoff, 0.25);
    assert_eq!(report.delta, decide(report.pi_hat, 1.0, 3.0));
    assert_eq!(report.delta, report.pi_hat > 0.25);
}

#[test]
fn report_is_reproducible_and_consistent() {
    let data = simulated(1, 120, 5);
    let a = test_on(&data, &HyperParams::default(), 5);
    let b = test_on(&data, &HyperParams::default(), 5);
    assert_eq!(a, b);
    assert_eq!(a.to_text(), b.to_text());
    assert_eq!(a.k_histogram.values().sum::<usize>(), a.k_used);
    assert_eq!(a.k_used, 2_700);
    let c = test_on(&data, &HyperParams::default(), 6);
    assert_ne!(a.k_histogram, c.k_histogram);
}

#[test]
fn ingested_series_runs_end_to_end() {
    let mut text = String::from("# year,anomaly\n");
    let data = simulated(2, 80, 7);
    for (i, y) in data.y().iter().enumerate() {
        text.push_str(&format!("{},{y}\n", 1900 + i));
    }
    let parsed = parse_series(&text).unwrap();
    assert_eq!(parsed.y(), data.y());
    let a = test_on(&parsed, &HyperParams::default(), 8);
    let b = test_on(&data, &HyperParams::default(), 8);
    assert_eq!(a, b);
}

#[test]
fn constant_series_does_not_crash() {
    let data = Dataset::new(vec![0.0; 30]).unwrap();
    let report = test_on(&data, &HyperParams::default(), 9);
    assert!(report.pi_hat.is_finite());
}
