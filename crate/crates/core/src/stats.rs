//! Goodness-of-fit helpers used by the statistical checks.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::detection::TimeTagStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample Kolmogorov–Smirnov test against the unit-mean exponential.
pub fn ks_exponential(samples: &[f64]) -> KsResult {
    let mut sorted: Vec<f64> = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let nf = n as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = if x > 0.0 { -(-x).exp_m1() } else { 0.0 };
        d = d.max(cdf - i as f64 / nf).max((i + 1) as f64 / nf - cdf);
    }
    let root = nf.sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_survival((root + 0.12 + 0.11 / root) * d),
        n,
    }
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = sign * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: f64,
    pub p_value: f64,
}

pub fn chi_square_survival(statistic: f64, dof: f64) -> f64 {
    ChiSquared::new(dof)
        .map(|d| d.sf(statistic))
        .unwrap_or(f64::NAN)
}

/// Dispersion test of counts against a stationary source with mean taken
/// from the data and variance `mean · variance_factor`.
pub fn dispersion_chi_square(counts: &[u64], variance_factor: f64) -> ChiSquareResult {
    let k = counts.len() as f64;
    let mean = counts.iter().sum::<u64>() as f64 / k;
    let variance = mean * variance_factor;
    let statistic = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / variance;
    let dof = k - 1.0;
    ChiSquareResult {
        statistic,
        dof,
        p_value: chi_square_survival(statistic, dof),
    }
}

/// Singles-rate flatness: counts in consecutive macro-bins tested against a
/// constant rate.
///
/// `bunching_excess` is the source's counting excess over one macro-bin (see
/// [`crate::analytic::counting_excess`]); zero for a coherent source, in
/// which case this is the plain Poisson index-of-dispersion test.
pub fn singles_flatness(
    stream: &TimeTagStream,
    macro_bin_ps: u64,
    bunching_excess: f64,
) -> ChiSquareResult {
    let counts = stream.macro_bin_counts(macro_bin_ps);
    let mean = counts.iter().sum::<u64>() as f64 / counts.len() as f64;
    dispersion_chi_square(&counts, 1.0 + mean * bunching_excess)
}

/// Sample mean and its standard error.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
