//! Null moments of the delayed coincidence count for independent homogeneous
//! Poisson trains.
//!
//! `I(L,k)` is the integral over `[a,b]^(L-k)` of the squared volume of the
//! `k`-dimensional slice of `{span <= delta}`. For `k < L` it equals
//! `f(L,k) (b-a) delta^(L+k-1) - h(L,k) delta^(L+k)` with rational `f`, `h`,
//! and `I(L,L) = I(L,0)^2`. The mean and variance of the count are
//! linear combinations of these integrals weighted by the rates.
//!
//! [`integral_oracle`] evaluates the same integrals without the closed forms,
//! either by one- and two-dimensional Gauss–Legendre quadrature over the
//! order statistics of the outer points, or by importance-sampled Monte Carlo.

use itertools::Itertools;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spike_data::Window;

/// Largest pattern size accepted by [`theoretical_moments`].
pub const MAX_PATTERN_SIZE: usize = 20;

fn check_lk(l: usize, k: usize, allow_k_eq_l: bool) -> Result<()> {
    let k_ok = if allow_k_eq_l { k <= l } else { k < l };
    if l >= 2 && k_ok {
        Ok(())
    } else {
        Err(Error::Domain(format!("invalid (L, k) = ({l}, {k})")))
    }
}

/// `f(L,k) = (k(k+1) + L(L+1)) / (L-k+1)` for `0 <= k < L`.
pub fn f_lk(l: usize, k: usize) -> Result<Ratio<i64>> {
    check_lk(l, k, false)?;
    let (l, k) = (l as i64, k as i64);
    Ok(Ratio::new(k * (k + 1) + l * (l + 1), l - k + 1))
}

/// `h(L,k)`, the cubic-over-quadratic coefficient of `delta^(L+k)`.
pub fn h_lk(l: usize, k: usize) -> Result<Ratio<i64>> {
    check_lk(l, k, false)?;
    let (l, k) = (l as i64, k as i64);
    let num = -k * k * k + k * k * (2 + l) + k * (5 + 2 * l - l * l) + l * l * l + 2 * l * l - l - 2;
    Ok(Ratio::new(num, (l - k + 2) * (l - k + 1)))
}

fn to_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn check_delta(window: &Window, delta: f64) -> Result<()> {
    let half_width = window.length() / 2.0;
    if delta > 0.0 && delta < half_width {
        Ok(())
    } else {
        Err(Error::InvalidDelta { delta, half_width })
    }
}

/// Closed form of `I(L,k)` for `0 <= k <= L`.
pub fn i_lk(l: usize, k: usize, window: &Window, delta: f64) -> Result<f64> {
    check_lk(l, k, true)?;
    check_delta(window, delta)?;
    let t = window.length();
    if k == l {
        // L^2 T^2 d^(2L-2) - 2L(L-1) T d^(2L-1) + (L-1)^2 d^(2L), factored
        let lf = l as f64;
        let inner = lf * t - (lf - 1.0) * delta;
        return Ok(delta.powi(2 * l as i32 - 2) * inner * inner);
    }
    let f = to_f64(f_lk(l, k)?);
    let h = to_f64(h_lk(l, k)?);
    Ok(delta.powi((l + k) as i32 - 1) * (f * t - h * delta))
}

/// Firing rates (Hz) of the neurons of one pattern, in pattern order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntensityVector(pub Vec<f64>);

impl IntensityVector {
    pub fn rates(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn product(&self) -> f64 {
        self.0.iter().product()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    /// Expected count under independence.
    pub m0: f64,
    pub variance: f64,
    /// `per_k_terms[0] = m0`, `per_k_terms[k]` the `k`-subset term of the variance.
    pub per_k_terms: Vec<f64>,
}

/// `sum over J subset of size k of prod_{j in J} lambda_j^2 prod_{l not in J} lambda_l`.
pub fn subset_weight(lambdas: &[f64], k: usize) -> f64 {
    (0..lambdas.len())
        .combinations(k)
        .map(|js| {
            let mut in_j = vec![false; lambdas.len()];
            js.iter().for_each(|&j| in_j[j] = true);
            lambdas
                .iter()
                .zip(&in_j)
                .map(|(&x, &sq)| if sq { x * x } else { x })
                .product::<f64>()
        })
        .sum()
}

/// Expected value and variance of the count under independent homogeneous
/// Poisson trains with the given rates.
pub fn theoretical_moments(lambdas: &IntensityVector, window: &Window, delta: f64) -> Result<MomentReport> {
    let l = lambdas.len();
    if l < 2 {
        return Err(Error::Domain(format!("pattern size {l} < 2")));
    }
    if l > MAX_PATTERN_SIZE {
        return Err(Error::Domain(format!(
            "pattern size {l} exceeds the supported maximum {MAX_PATTERN_SIZE}"
        )));
    }
    if lambdas.rates().iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::Domain("rates must be finite and non-negative".into()));
    }
    check_delta(window, delta)?;
    let m0 = lambdas.product() * i_lk(l, 0, window, delta)?;
    let mut per_k_terms = vec![m0];
    for k in 1..l {
        per_k_terms.push(subset_weight(lambdas.rates(), k) * i_lk(l, k, window, delta)?);
    }
    Ok(MomentReport {
        m0,
        variance: per_k_terms.iter().sum(),
        per_k_terms,
    })
}

/// Asymptotic variance of `sqrt(M) (mean count - plug-in m0)`:
/// `Var(X) - m0^2 / (b-a) * sum 1/lambda`.
pub fn delta_method_variance(lambdas: &IntensityVector, window: &Window, delta: f64) -> Result<f64> {
    if lambdas.rates().iter().any(|&x| x <= 0.0) {
        return Err(Error::Domain("rates must be positive".into()));
    }
    let m = theoretical_moments(lambdas, window, delta)?;
    let inv_sum: f64 = lambdas.rates().iter().map(|x| 1.0 / x).sum();
    Ok(m.variance - m.m0 * m.m0 / window.length() * inv_sum)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    Quadrature,
    MonteCarlo { samples: usize, seed: u64 },
}

/// Numerical estimate with an absolute error indication: the change between two
/// quadrature refinements, or the Monte-Carlo standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub value: f64,
    pub error: f64,
}

/// Largest `L` the quadrature oracle accepts.
pub const QUADRATURE_MAX_L: usize = 10;
/// Smallest sample count the Monte-Carlo oracle accepts.
pub const MC_MIN_SAMPLES: usize = 1000;

/// Evaluates the defining integral of `I(L,k)` without the closed form.
pub fn integral_oracle(
    l: usize,
    k: usize,
    window: &Window,
    delta: f64,
    method: OracleMethod,
) -> Result<OracleEstimate> {
    check_lk(l, k, true)?;
    check_delta(window, delta)?;
    match method {
        OracleMethod::Quadrature => {
            if l > QUADRATURE_MAX_L {
                return Err(Error::Domain(format!(
                    "quadrature oracle supports L <= {QUADRATURE_MAX_L}, got {l}"
                )));
            }
            let q = Quadrature::new(window.a(), window.b(), delta);
            let coarse = q.integral(l, k, 2);
            let fine = q.integral(l, k, 4);
            Ok(OracleEstimate {
                value: fine,
                error: (fine - coarse).abs(),
            })
        }
        OracleMethod::MonteCarlo { samples, seed } => {
            if samples < MC_MIN_SAMPLES {
                return Err(Error::Domain(format!(
                    "need at least {MC_MIN_SAMPLES} samples, got {samples}"
                )));
            }
            Ok(monte_carlo(l, k, window, delta, samples, seed))
        }
    }
}

/// 10-point Gauss–Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 10] = [
    -0.973_906_528_517_171_7,
    -0.865_063_366_688_984_5,
    -0.679_409_568_299_024_4,
    -0.433_395_394_129_247_2,
    -0.148_874_338_981_631_2,
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GL_WEIGHTS: [f64; 10] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_87,
    0.295_524_224_714_752_87,
    0.269_266_719_309_996_35,
    0.219_086_362_515_982_04,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_14,
];

/// Composite Gauss–Legendre over `[lo, hi]`, split at every breakpoint inside
/// the interval and then into `panels` equal pieces.
fn gauss(lo: f64, hi: f64, breaks: &[f64], panels: usize, f: &mut dyn FnMut(f64) -> f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let mut cuts: Vec<f64> = std::iter::once(lo)
        .chain(breaks.iter().copied().filter(|&x| x > lo && x < hi))
        .chain(std::iter::once(hi))
        .collect();
    cuts.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for seg in cuts.windows(2) {
        let width = (seg[1] - seg[0]) / panels as f64;
        for p in 0..panels {
            let x0 = seg[0] + p as f64 * width;
            let half = width / 2.0;
            let mid = x0 + half;
            for (node, weight) in GL_NODES.iter().zip(GL_WEIGHTS) {
                total += weight * half * f(mid + half * node);
            }
        }
    }
    total
}

struct Quadrature {
    a: f64,
    b: f64,
    delta: f64,
}

impl Quadrature {
    fn new(a: f64, b: f64, delta: f64) -> Self {
        Self { a, b, delta }
    }

    /// Volume of `{x in [a,b]^k : span(x together with [m, big_m]) <= delta}`.
    /// With `u` the smallest inner point, the others lie in `[u, q(u)]` where
    /// `q(u) = min(b, min(u, m) + delta)`.
    fn inner(&self, k: usize, m: f64, big_m: f64) -> f64 {
        if big_m - m > self.delta {
            return 0.0;
        }
        if k == 0 {
            return 1.0;
        }
        let (a, b, d) = (self.a, self.b, self.delta);
        let lo = a.max(big_m - d);
        let hi = b.min(m + d);
        let mut integrand = |u: f64| {
            let q = b.min(u.min(m) + d);
            k as f64 * (q - u).max(0.0).powi(k as i32 - 1)
        };
        gauss(lo, hi, &[m, b - d], 1, &mut integrand)
    }

    /// Volume of `{x in [a,b]^L : span(x) <= delta}`.
    fn span_volume(&self, l: usize, panels: usize) -> f64 {
        let (a, b, d) = (self.a, self.b, self.delta);
        let mut integrand = |u: f64| l as f64 * (b.min(u + d) - u).powi(l as i32 - 1);
        gauss(a, b, &[b - d], panels, &mut integrand)
    }

    fn integral(&self, l: usize, k: usize, panels: usize) -> f64 {
        let n = l - k;
        let (a, b, d) = (self.a, self.b, self.delta);
        match n {
            0 => self.span_volume(l, panels).powi(2),
            1 => {
                let mut f = |y: f64| self.inner(k, y, y).powi(2);
                gauss(a, b, &[a + d, b - d], panels, &mut f)
            }
            _ => {
                // joint density of (min, max) of n uniforms: n(n-1)(M-m)^(n-2)
                let coef = (n * (n - 1)) as f64;
                let mut outer = |m: f64| {
                    let mut f = |big_m: f64| {
                        coef * (big_m - m).powi(n as i32 - 2) * self.inner(k, m, big_m).powi(2)
                    };
                    gauss(m, b.min(m + d), &[a + d, b - d], panels, &mut f)
                };
                let breaks = [a + d, a + 2.0 * d, b - 2.0 * d, b - d];
                gauss(a, b, &breaks, panels, &mut outer)
            }
        }
    }
}

fn span_ok(xs: &[f64], delta: f64) -> bool {
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    hi - lo <= delta
}

/// One anchor uniform on `[a,b]`, the remaining `rest` coordinates uniform on
/// `[anchor - delta, anchor + delta]` clipped to the window. Returns the
/// importance weight and fills `out` (anchor first).
fn anchored_draw(rng: &mut ChaCha8Rng, a: f64, b: f64, delta: f64, rest: usize, out: &mut Vec<f64>) -> f64 {
    let anchor = rng.random_range(a..b);
    let lo = a.max(anchor - delta);
    let hi = b.min(anchor + delta);
    out.push(anchor);
    for _ in 0..rest {
        out.push(rng.random_range(lo..hi));
    }
    (b - a) * (hi - lo).powi(rest as i32)
}

/// Unbiased estimator: the squared inner integral is replaced by the product
/// of two independent inner draws sharing the outer point.
fn monte_carlo(l: usize, k: usize, window: &Window, delta: f64, samples: usize, seed: u64) -> OracleEstimate {
    let (a, b) = (window.a(), window.b());
    let n = l - k;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut first = Vec::with_capacity(l);
    let mut second = Vec::with_capacity(l);
    let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        first.clear();
        second.clear();
        let w = if n == 0 {
            let w1 = anchored_draw(&mut rng, a, b, delta, l - 1, &mut first);
            let w2 = anchored_draw(&mut rng, a, b, delta, l - 1, &mut second);
            if span_ok(&first, delta) && span_ok(&second, delta) {
                w1 * w2
            } else {
                0.0
            }
        } else {
            // shared outer points, then two independent sets of inner points
            let w = anchored_draw(&mut rng, a, b, delta, n - 1 + 2 * k, &mut first);
            second.extend_from_slice(&first[..n]);
            second.extend_from_slice(&first[n + k..]);
            first.truncate(n + k);
            if span_ok(&first, delta) && span_ok(&second, delta) {
                w
            } else {
                0.0
            }
        };
        sum += w;
        sum_sq += w * w;
    }
    let nf = samples as f64;
    let mean = sum / nf;
    let var = (sum_sq / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
    OracleEstimate {
        value: mean,
        error: (var / nf).sqrt(),
    }
}
