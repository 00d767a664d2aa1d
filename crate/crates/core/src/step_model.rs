//! Step-function representation of the regression function.
//!
//! The design grid is implicit: observation `i` (1-based) sits at
//! `x_i = i / n`. A step function with `k` levels is constant on the bins
//! `[(j-1)/k, j/k)`, `j = 1..k`, with the last bin closed at 1.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Responses observed on the equispaced design `i / n`, `i = 1..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if y.len() < 2 {
            return domain(format!("need at least 2 observations, got {}", y.len()));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return domain(format!("observation {} is not finite", i + 1));
        }
        Ok(Self { y })
    }

    /// Builds a dataset from an explicit design column.
    ///
    /// The design is accepted when, after the affine map sending `x_1` to
    /// `1/n` and `x_n` to `1`, every point equals `i/n` within a relative
    /// tolerance of `1e-9`.
    pub fn with_design(x: &[f64], y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return domain(format!(
                "design has {} points but there are {} responses",
                x.len(),
                y.len()
            ));
        }
        let data = Self::new(y)?;
        let n = data.n() as f64;
        let (first, last) = (x[0], x[x.len() - 1]);
        if !(last - first).is_finite() || last == first {
            return domain("design column must be strictly increasing and finite");
        }
        let scale = (1.0 - 1.0 / n) / (last - first);
        for (i, &xi) in x.iter().enumerate() {
            let normalized = 1.0 / n + (xi - first) * scale;
            let expected = (i + 1) as f64 / n;
            if (normalized - expected).abs() > 1e-9 * expected {
                return domain(format!(
                    "design point {} ({xi}) is not on an equispaced grid",
                    i + 1
                ));
            }
        }
        Ok(data)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Design point of the 1-based observation index `i`.
    pub fn design_point(&self, i: usize) -> f64 {
        i as f64 / self.n() as f64
    }

    pub fn mean(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.n() as f64
    }

    /// Sample variance with divisor `n - 1`.
    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        let ss: f64 = self.y.iter().map(|v| (v - mean) * (v - mean)).sum();
        ss / (self.n() - 1) as f64
    }

    /// The series `-y`, used to test for a non-decreasing trend.
    pub fn negated(&self) -> Self {
        Self {
            y: self.y.iter().map(|v| -v).collect(),
        }
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self {
            y: self.y.iter().map(|v| v + c).collect(),
        }
    }
}

/// Piecewise-constant function with `k = omega.len()` equal-width bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    omega: Vec<f64>,
}

impl StepFunction {
    pub fn new(omega: Vec<f64>) -> Result<Self> {
        if omega.is_empty() {
            return domain("a step function needs at least one level");
        }
        if omega.iter().any(|w| !w.is_finite()) {
            return domain("step function levels must be finite");
        }
        Ok(Self { omega })
    }

    pub fn k(&self) -> usize {
        self.omega.len()
    }

    pub fn levels(&self) -> &[f64] {
        &self.omega
    }

    pub fn evaluate(&self, x: f64) -> Result<f64> {
        let j = bin_index(x, self.k())?;
        Ok(self.omega[j - 1])
    }

    /// Largest upward jump `max_{j >= i} (omega_j - omega_i)`.
    pub fn discrepancy(&self) -> f64 {
        discrepancy(&self.omega)
    }

    pub fn is_non_increasing(&self) -> bool {
        self.omega.windows(2).all(|w| w[1] <= w[0])
    }
}

/// 1-based bin of `x` among `k` equal-width bins; `x = 1` belongs to bin `k`.
pub fn bin_index(x: f64, k: usize) -> Result<usize> {
    if k == 0 {
        return domain("bin count must be at least 1");
    }
    if !(0.0..=1.0).contains(&x) {
        return domain(format!("x = {x} lies outside [0, 1]"));
    }
    let j = (x * k as f64).floor() as usize + 1;
    Ok(j.min(k))
}

/// 0-based bin of the design point `i / n` (`i` 1-based), in exact integer
/// arithmetic. Floating-point `i / n * k` can land just below a bin edge, so
/// data are always binned with this function.
#[inline]
pub fn design_bin(i: usize, n: usize, k: usize) -> usize {
    (i * k / n).min(k - 1)
}

/// Per-bin summaries of a dataset for a given number of bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub counts: Vec<usize>,
    pub means: Vec<f64>,
    pub sse: Vec<f64>,
}

impl BinStats {
    pub fn k(&self) -> usize {
        self.counts.len()
    }
}

/// Counts, means and within-bin sums of squares for `k` bins.
///
/// Empty bins report mean `m` (the prior mean) and zero sum of squares.
pub fn bin_stats(data: &Dataset, k: usize, m: f64) -> Result<BinStats> {
    let n = data.n();
    if k == 0 || k > n {
        return domain(format!("bin count {k} must lie in 1..={n}"));
    }
    let mut counts = vec![0usize; k];
    let mut means = vec![0.0; k];
    let mut sse = vec![0.0; k];
    // Welford updates: constant bins keep an exact mean and zero sse.
    for (idx, &y) in data.y().iter().enumerate() {
        let j = design_bin(idx + 1, n, k);
        counts[j] += 1;
        let delta = y - means[j];
        means[j] += delta / counts[j] as f64;
        sse[j] += delta * (y - means[j]);
    }
    for j in 0..k {
        if counts[j] == 0 {
            means[j] = m;
        }
    }
    Ok(BinStats { counts, means, sse })
}

/// Largest upward violation `max_{j >= i} (omega_j - omega_i)`, in one pass.
///
/// Zero exactly when `omega` is non-increasing; `0.0` for an empty slice.
pub fn discrepancy(omega: &[f64]) -> f64 {
    let mut best = 0.0f64;
    let mut running_min = f64::INFINITY;
    for &w in omega {
        running_min = running_min.min(w);
        let jump = w - running_min;
        if jump > best {
            best = jump;
        }
    }
    best
}

/// Bin-wise averages of `f0` over the design points: the step function
/// closest to `f0` in Kullback-Leibler divergence among `k`-bin functions.
pub fn kl_projection<F: Fn(f64) -> f64>(f0: F, n: usize, k: usize) -> Result<StepFunction> {
    if k == 0 || k > n {
        return domain(format!("bin count {k} must lie in 1..={n}"));
    }
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for i in 1..=n {
        let j = design_bin(i, n, k);
        sums[j] += f0(i as f64 / n as f64);
        counts[j] += 1;
    }
    if let Some(j) = counts.iter().position(|&c| c == 0) {
        return domain(format!("bin {} contains no design point", j + 1));
    }
    let omega = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s / c as f64)
        .collect();
    StepFunction::new(omega)
}

/// Root-mean-square distance between `f` and `g` on the design grid.
pub fn grid_distance<F, G>(f: F, g: G, n: usize) -> f64
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    if n == 0 {
        return 0.0;
    }
    let ss: f64 = (1..=n)
        .map(|i| {
            let x = i as f64 / n as f64;
            let d = f(x) - g(x);
            d * d
        })
        .sum();
    (ss / n as f64).sqrt()
}
