//! Monte Carlo estimates and small statistics helpers.

use crate::rng::RandomStream;
use serde::{Deserialize, Serialize};

/// A Monte Carlo point estimate with seed provenance.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
    pub stream: RandomStream,
}

impl Estimate {
    /// Estimate of a Bernoulli mean from `hits` successes out of `n`.
    pub fn bernoulli(hits: u64, n: u64, stream: RandomStream) -> Self {
        assert!(n >= 1);
        let p = hits as f64 / n as f64;
        // sample sd / sqrt(n) with the n-1 convention
        let var = if n > 1 {
            p * (1.0 - p) * n as f64 / (n as f64 - 1.0)
        } else {
            0.0
        };
        Estimate {
            mean: p,
            stderr: (var / n as f64).sqrt(),
            n,
            stream,
        }
    }

    /// Estimate from a sum and sum of squares of `n` samples.
    pub fn from_moments(sum: f64, sum_sq: f64, n: u64, stream: RandomStream) -> Self {
        assert!(n >= 1);
        let mean = sum / n as f64;
        let var = if n > 1 {
            ((sum_sq - sum * sum / n as f64) / (n as f64 - 1.0)).max(0.0)
        } else {
            0.0
        };
        Estimate {
            mean,
            stderr: (var / n as f64).sqrt(),
            n,
            stream,
        }
    }

    /// Combined standard error of the difference of two independent estimates.
    pub fn combined_stderr(&self, other: &Estimate) -> f64 {
        (self.stderr * self.stderr + other.stderr * other.stderr).sqrt()
    }

    /// `|a - b| <= z * combined stderr`.
    pub fn agrees_with(&self, other: &Estimate, z: f64) -> bool {
        (self.mean - other.mean).abs() <= z * self.combined_stderr(other)
    }
}

/// Ordinary least squares fit `y = intercept + slope * x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

pub fn pearson_correlation(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let t = a[i].min(b[j]);
        while i < n && a[i] <= t {
            i += 1;
        }
        while j < m && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

/// Critical KS distance at the 5% level for samples of sizes `n`, `m`.
pub fn ks_critical_5pct(n: usize, m: usize) -> f64 {
    1.358 * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Chi-square statistic against uniform expected counts.
pub fn chi_square_uniform(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernoulli_estimate() {
        let e = Estimate::bernoulli(250, 1000, RandomStream::new(0, 0));
        assert!((e.mean - 0.25).abs() < 1e-15);
        assert!((e.stderr - (0.25_f64 * 0.75 / 999.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn fit_recovers_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [3.0, 5.0, 7.0, 9.0];
        let (b, a) = linear_fit(&xs, &ys);
        assert!((a - 2.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
        assert!((pearson_correlation(&xs, &ys) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ks_detects_shift() {
        let mut a: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let mut b: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0 + 0.5).collect();
        assert!(ks_statistic(&mut a, &mut b) > 0.45);
        let mut c: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let mut d = c.clone();
        assert!(ks_statistic(&mut c, &mut d) < 1e-12);
    }
}
