//! Binomial intervals and the Poisson goodness-of-fit test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::factorial::ln_factorial;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Minimum expected count per chi-square cell.
pub const MIN_EXPECTED_PER_BIN: f64 = 5.0;

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lower = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let upper = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    (lower, upper)
}

/// A probability estimate with its interval and plain binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub std_error: f64,
}

impl Estimate {
    /// Proportion with a 95% Wilson interval.
    pub fn proportion(successes: u64, trials: u64) -> Self {
        let value = if trials == 0 { 0.0 } else { successes as f64 / trials as f64 };
        let (lower, upper) = wilson_interval(successes, trials, Z_95);
        Self {
            value,
            lower,
            upper,
            std_error: binomial_std_error(value, trials),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

pub fn binomial_std_error(p: f64, trials: u64) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    (p * (1.0 - p) / trials as f64).sqrt()
}

pub fn poisson_pmf(n: u64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (n as f64 * lambda.ln() - lambda - ln_factorial(n)).exp()
}

/// One cell of a chi-square test: dot counts `first..=last` (`last = None`
/// for an open tail).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareBin {
    pub first: u64,
    pub last: Option<u64>,
    pub observed: u64,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareFit {
    pub statistic: f64,
    pub degrees_of_freedom: u64,
    pub p_value: f64,
    pub bins: Vec<ChiSquareBin>,
}

/// Pearson chi-square of a dot-count histogram against Poisson(`lambda`).
///
/// `histogram[n]` is the number of replications with `n` dots. Cells are
/// merged until each expects at least five counts. `lambda` is taken as known,
/// so the degrees of freedom are `cells − 1`. Returns `None` when fewer than
/// two cells remain.
pub fn chi_square_poisson(histogram: &[u64], lambda: f64) -> Option<ChiSquareFit> {
    let total: u64 = histogram.iter().sum();
    if total == 0 || lambda.is_nan() || lambda <= 0.0 {
        return None;
    }
    let r = total as f64;
    let last = (histogram.len().saturating_sub(1) as u64)
        .max((lambda + 10.0 * lambda.sqrt() + 10.0).ceil() as u64);

    let mut cells: Vec<(u64, u64, f64)> = Vec::new();
    let mut mass = 0.0;
    for n in 0..last {
        let p = poisson_pmf(n, lambda);
        mass += p;
        cells.push((n, histogram.get(n as usize).copied().unwrap_or(0), r * p));
    }
    let tail_observed: u64 = histogram.iter().skip(last as usize).sum();
    cells.push((last, tail_observed, r * (1.0 - mass).max(0.0)));

    let mut bins: Vec<ChiSquareBin> = Vec::new();
    let mut pending: Option<ChiSquareBin> = None;
    for (n, observed, expected) in cells {
        let bin = pending.get_or_insert(ChiSquareBin {
            first: n,
            last: Some(n),
            observed: 0,
            expected: 0.0,
        });
        bin.last = Some(n);
        bin.observed += observed;
        bin.expected += expected;
        if bin.expected >= MIN_EXPECTED_PER_BIN {
            bins.push(pending.take().expect("just inserted"));
        }
    }
    if let Some(rest) = pending {
        match bins.last_mut() {
            Some(b) => {
                b.observed += rest.observed;
                b.expected += rest.expected;
            }
            None => bins.push(rest),
        }
    }
    if let Some(b) = bins.last_mut() {
        b.last = None;
    }
    if bins.len() < 2 {
        return None;
    }

    let statistic: f64 = bins
        .iter()
        .map(|b| {
            let d = b.observed as f64 - b.expected;
            d * d / b.expected
        })
        .sum();
    let dof = bins.len() as u64 - 1;
    let p_value = ChiSquared::new(dof as f64)
        .map(|d| 1.0 - d.cdf(statistic))
        .unwrap_or(f64::NAN);
    Some(ChiSquareFit {
        statistic,
        degrees_of_freedom: dof,
        p_value,
        bins,
    })
}
