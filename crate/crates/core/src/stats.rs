//! Order-insensitive summaries of Monte-Carlo samples.

use serde::{Deserialize, Serialize};

/// Pairwise summation; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (n - 1) as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimator {
    PlainMean,
    /// Standard error from the spread of `k` contiguous batch means.
    BatchMeans { k: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub estimator: Estimator,
}

/// Mean and standard error of `xs`. With `heavy_tail` the error bar comes from
/// `⌈√n⌉` batch means instead of the (possibly infinite) sample variance.
pub fn summarize(xs: &[f64], heavy_tail: bool) -> Summary {
    let n = xs.len();
    let m = mean(xs);
    if !heavy_tail || n < 4 {
        return Summary {
            mean: m,
            stderr: (variance(xs) / n as f64).sqrt(),
            n,
            estimator: Estimator::PlainMean,
        };
    }
    let k = (n as f64).sqrt().ceil() as usize;
    let batch_means: Vec<f64> = (0..k)
        .map(|b| {
            let lo = b * n / k;
            let hi = (b + 1) * n / k;
            mean(&xs[lo..hi])
        })
        .collect();
    Summary {
        mean: m,
        stderr: (variance(&batch_means) / k as f64).sqrt(),
        n,
        estimator: Estimator::BatchMeans { k },
    }
}

/// Wilson score interval for `k` successes in `n` trials at normal quantile `z`.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
    }

    #[test]
    fn plain_summary() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0], false);
        assert_eq!(s.mean, 2.5);
        assert!((s.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn batch_means_of_constant_is_exact() {
        let s = summarize(&vec![0.7; 101], true);
        assert_eq!(s.estimator, Estimator::BatchMeans { k: 11 });
        assert!((s.mean - 0.7).abs() < 1e-15);
        assert!(s.stderr < 1e-15);
    }

    #[test]
    fn wilson_contains_estimate() {
        let (lo, hi) = wilson_interval(30, 100, 1.96);
        assert!(lo < 0.3 && 0.3 < hi);
        assert_eq!(wilson_interval(0, 10, 1.96).0, 0.0);
    }
}
