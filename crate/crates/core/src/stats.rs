//! Distribution helpers: standard normal tails, Poisson CDF and quantiles,
//! Kolmogorov–Smirnov distances.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use libm::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// `Phi(x)` via `erfc`, accurate in both tails.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `2 (1 - Phi(|z|))`.
pub fn two_sided_normal_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// `z_p`, the `p`-quantile of `N(0,1)`.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Poisson probability mass, computed in log space.
pub fn poisson_pmf(mean: f64, m: u64) -> f64 {
    if mean == 0.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    let m = m as f64;
    (m * mean.ln() - mean - ln_gamma(m + 1.0)).exp()
}

/// `P(X <= m)` for `X ~ Poisson(mean)`. Starts from a log-space mass term and
/// sums the tail lying away from the mode with the ratio recurrence, so the
/// series always decreases and converges.
pub fn poisson_cdf(mean: f64, m: u64) -> f64 {
    if mean == 0.0 {
        return 1.0;
    }
    if (m as f64) < mean {
        // lower tail: p(j-1) = p(j) j / mean
        let mut term = poisson_pmf(mean, m);
        let mut total = 0.0;
        let mut j = m;
        loop {
            total += term;
            if j == 0 || term <= total * 1e-17 {
                break;
            }
            term *= j as f64 / mean;
            j -= 1;
        }
        total.min(1.0)
    } else {
        // upper tail: p(j+1) = p(j) mean / (j+1)
        let mut j = m + 1;
        let mut term = poisson_pmf(mean, j);
        let mut upper = 0.0;
        while term > 0.0 && term > upper * 1e-17 {
            upper += term;
            j += 1;
            term *= mean / j as f64;
        }
        (1.0 - upper).clamp(0.0, 1.0)
    }
}

/// `P(X >= m)`.
pub fn poisson_sf_inclusive(mean: f64, m: u64) -> f64 {
    if m == 0 {
        return 1.0;
    }
    (1.0 - poisson_cdf(mean, m - 1)).max(0.0)
}

/// Smallest `m` with `P(X <= m) >= p`.
pub fn poisson_quantile(mean: f64, p: f64) -> u64 {
    let mut m = 0;
    while poisson_cdf(mean, m) < p {
        m += 1;
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    StdNormal,
    Uniform01,
}

impl Reference {
    pub fn cdf(self, x: f64) -> f64 {
        match self {
            Reference::StdNormal => normal_cdf(x),
            Reference::Uniform01 => x.clamp(0.0, 1.0),
        }
    }
}

/// `sup_x |F_n(x) - F(x)|`, evaluated at the jumps of the empirical CDF.
pub fn ks_distance(sample: &[f64], reference: Reference) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::Domain("empty sample".into()));
    }
    if sample.iter().any(|x| x.is_nan()) {
        return Err(Error::Domain("NaN in sample".into()));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = reference.cdf(x);
            let i = i as f64;
            ((i + 1.0) / n - f).max(f - i / n)
        })
        .fold(0.0, f64::max);
    Ok(d)
}
