//! Replica statistics, least-squares fits and the two-sample
//! Kolmogorov–Smirnov test.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Welford running mean and variance.
///
/// The first sample is taken verbatim as the mean, so a stream of identical
/// values reports that value exactly with zero variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        if self.count == 1 {
            self.mean = x;
            return;
        }
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    /// Standard error of the mean; zero for fewer than two samples.
    pub fn standard_error(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            libm::sqrt(self.variance() / self.count as f64)
        }
    }
}

impl FromIterator<f64> for Welford {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut w = Welford::new();
        for x in iter {
            w.push(x);
        }
        w
    }
}

/// Monte Carlo estimate with cross-replica standard errors.
///
/// Scalar estimators use vectors of length one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorStats {
    pub estimate: Vec<f64>,
    pub standard_error: Vec<f64>,
    /// Averaging window T.
    pub window: f64,
    /// Discarded transient T_b.
    pub burn_in: f64,
    pub replicas: usize,
    pub seed: u64,
    pub per_replica: Vec<Vec<f64>>,
}

impl EstimatorStats {
    /// Reduces per-replica vectors (all of equal length) in index order.
    pub fn from_replicas(per_replica: Vec<Vec<f64>>, window: f64, burn_in: f64, seed: u64) -> Self {
        let dim = per_replica.first().map_or(0, Vec::len);
        let mut acc = alloc::vec![Welford::new(); dim];
        for row in &per_replica {
            debug_assert_eq!(row.len(), dim);
            for (w, &x) in acc.iter_mut().zip(row) {
                w.push(x);
            }
        }
        EstimatorStats {
            estimate: acc.iter().map(Welford::mean).collect(),
            standard_error: acc.iter().map(Welford::standard_error).collect(),
            window,
            burn_in,
            replicas: per_replica.len(),
            seed,
            per_replica,
        }
    }

    pub fn scalar(&self) -> f64 {
        self.estimate[0]
    }

    pub fn scalar_se(&self) -> f64 {
        self.standard_error[0]
    }

    /// `|estimate - target| / se` for a scalar estimator; infinite when the SE
    /// vanishes but the estimate misses.
    pub fn z_score(&self, index: usize, target: f64) -> f64 {
        let diff = (self.estimate[index] - target).abs();
        let se = self.standard_error[index];
        if diff == 0.0 {
            0.0
        } else if se == 0.0 {
            f64::INFINITY
        } else {
            diff / se
        }
    }
}

/// Ordinary least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Some(LinearFit { slope, intercept: my - slope * mx, r_squared })
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsTest {
    if a.is_empty() || b.is_empty() {
        return KsTest { statistic: 0.0, p_value: 1.0 };
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let t = if xs[i] <= ys[j] { xs[i] } else { ys[j] };
        while i < n && xs[i] <= t {
            i += 1;
        }
        while j < m && ys[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let sq = libm::sqrt(ne);
    // Stephens' small-sample correction of the Kolmogorov limit law.
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    KsTest { statistic: d, p_value: kolmogorov_tail(lambda) }
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = sign * libm::exp(-2.0 * kf * kf * lambda * lambda);
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
