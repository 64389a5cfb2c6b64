//! Independence tests on a pattern of neurons: the asymptotically Gaussian
//! delayed-coincidence test (GAUE), the binned unitary-events test (UE), and
//! Benjamini–Hochberg control over all sub-patterns.

use serde::{Deserialize, Serialize};

use crate::closed_form::{i_lk, theoretical_moments, IntensityVector};
use crate::coincidence::{
    bin_trial, constellation_count, delayed_count_unchecked, CoincidenceParams, Constellation,
    ConstellationMatch,
};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::spike_data::{PatternSubset, SpikeTrain, Trial, TrialSet};
use crate::stats::{normal_quantile, poisson_cdf, poisson_quantile, two_sided_normal_p};

/// Largest neuron count accepted by [`multi_pattern_test`] by default.
pub const DEFAULT_PATTERN_NEURON_CAP: usize = 10;

/// `lambda_l = total spikes of l / (M (b - a))`, pooled over trials.
pub fn estimate_lambdas(ts: &TrialSet, subset: &PatternSubset) -> IntensityVector {
    let scale = ts.trial_count() as f64 * ts.window().length();
    IntensityVector(
        subset
            .indices()
            .iter()
            .map(|&l| {
                let total: usize = ts.trials().iter().map(|t| t.train(l).len()).sum();
                total as f64 / scale
            })
            .collect(),
    )
}

/// Intermediate quantities of the GAUE statistic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaueComputation {
    pub m_bar: f64,
    pub lambda_hats: Vec<f64>,
    pub m0_hat: f64,
    pub v_hat: f64,
    pub sigma2_hat: f64,
    pub statistic: f64,
    pub trials: usize,
}

fn check_subset(ts: &TrialSet, subset: &PatternSubset) -> Result<()> {
    if subset.len() < 2 {
        return Err(Error::InvalidPattern(format!("pattern {subset} has fewer than 2 neurons")));
    }
    if let Some(&bad) = subset.indices().iter().find(|&&i| i >= ts.neuron_count()) {
        return Err(Error::InvalidPattern(format!(
            "neuron {} outside 1..={}",
            bad + 1,
            ts.neuron_count()
        )));
    }
    Ok(())
}

/// Mean delayed coincidence count of `subset` over the trials.
pub fn mean_coincidence_count(ts: &TrialSet, subset: &PatternSubset, delta: f64) -> Result<f64> {
    check_subset(ts, subset)?;
    CoincidenceParams::new(delta).check(ts.window())?;
    let total: u64 = ts
        .trials()
        .iter()
        .map(|t| delayed_count_unchecked(t, subset, delta))
        .sum();
    Ok(total as f64 / ts.trial_count() as f64)
}

pub fn gaue_compute(ts: &TrialSet, subset: &PatternSubset, delta: f64) -> Result<GaueComputation> {
    check_subset(ts, subset)?;
    let window = ts.window();
    CoincidenceParams::new(delta).check(window)?;
    let m = ts.trial_count();
    if m < 2 {
        return Err(Error::Domain(format!("GAUE needs at least 2 trials, got {m}")));
    }
    let lambdas = estimate_lambdas(ts, subset);
    if let Some(pos) = lambdas.rates().iter().position(|&x| x == 0.0) {
        return Err(Error::ZeroIntensity {
            neuron: subset.indices()[pos] + 1,
        });
    }
    let m_bar = mean_coincidence_count(ts, subset, delta)?;
    let moments = theoretical_moments(&lambdas, window, delta)?;
    let l = subset.len();
    let prod_sq: f64 = lambdas.rates().iter().map(|x| x * x).product();
    let inv_sum: f64 = lambdas.rates().iter().map(|x| 1.0 / x).sum();
    let correction = i_lk(l, l, window, delta)? / window.length() * prod_sq * inv_sum;
    let sigma2_hat = moments.variance - correction;
    if !(sigma2_hat > 0.0) {
        return Err(Error::DegenerateVariance { sigma2: sigma2_hat });
    }
    let statistic = (m as f64).sqrt() * (m_bar - moments.m0) / sigma2_hat.sqrt();
    Ok(GaueComputation {
        m_bar,
        lambda_hats: lambdas.0,
        m0_hat: moments.m0,
        v_hat: moments.variance,
        sigma2_hat,
        statistic,
        trials: m,
    })
}

/// Direction of a detected dependence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Excitatory,
    Inhibitory,
    None,
}

impl Sign {
    fn of(excess: f64, reject: bool) -> Self {
        match (reject, excess.partial_cmp(&0.0)) {
            (true, Some(std::cmp::Ordering::Greater)) => Sign::Excitatory,
            (true, Some(std::cmp::Ordering::Less)) => Sign::Inhibitory,
            _ => Sign::None,
        }
    }
}

/// Conditions that were mapped to a conventional result instead of an error.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    ZeroIntensity,
    DegenerateVariance,
    /// UE expectation is 0 but constellations were observed.
    DegenerateNull,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub reject: bool,
    pub sign: Sign,
    /// Observed minus expected; its sign gives the dependence direction.
    pub excess: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<Flag>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("level {alpha} must lie in (0, 1)")))
    }
}

/// Two-sided GAUE test at level `alpha`; rejects iff `p <= alpha`.
pub fn gaue_test(ts: &TrialSet, subset: &PatternSubset, delta: f64, alpha: f64) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let g = gaue_compute(ts, subset, delta)?;
    Ok(gaue_outcome(&g, alpha))
}

pub fn gaue_outcome(g: &GaueComputation, alpha: f64) -> TestOutcome {
    let p_value = two_sided_normal_p(g.statistic);
    let reject = p_value <= alpha;
    let excess = g.m_bar - g.m0_hat;
    TestOutcome {
        statistic: g.statistic,
        p_value,
        reject,
        sign: Sign::of(excess, reject),
        excess,
        flags: Vec::new(),
    }
}

/// Default UE bin width for delay `delta`.
pub fn default_bin_width(delta: f64) -> f64 {
    2.0 * delta
}

/// Binned data reduced to what the UE test needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UeSummary {
    pub bins_per_trial: usize,
    /// Per-neuron probability that a bin holds at least one spike.
    pub p_hat: Vec<f64>,
    /// Total matching bins over all trials.
    pub observed: u64,
    pub trials: usize,
}

pub fn ue_summarize(
    ts: &TrialSet,
    w: &Constellation,
    bin_width: f64,
    mode: ConstellationMatch,
) -> Result<UeSummary> {
    let n = ts.neuron_count();
    if w.len() != n {
        return Err(Error::InvalidPattern(format!(
            "constellation has {} entries for {n} neurons",
            w.len()
        )));
    }
    let mut occupied = vec![0usize; n];
    let mut observed = 0;
    let mut bins = 0;
    for trial in ts.trials() {
        let bt = bin_trial(trial, bin_width)?;
        bins = bt.bin_count();
        for (l, o) in occupied.iter_mut().enumerate() {
            *o += bt.occupied(l);
        }
        observed += constellation_count(&bt, w, mode)?;
    }
    if bins == 0 {
        return Err(Error::Domain("no whole bin fits in the window".into()));
    }
    let cells = (bins * ts.trial_count()) as f64;
    Ok(UeSummary {
        bins_per_trial: bins,
        p_hat: occupied.iter().map(|&o| o as f64 / cells).collect(),
        observed,
        trials: ts.trial_count(),
    })
}

/// Expected matches per trial: `bins * prod_{l in w} p_l * prod_{k not in w} (1 - p_k)`.
/// Under marginal matching the neurons outside `w` are unconstrained.
pub fn ue_expected_count(p_hat: &[f64], bins: usize, w: &Constellation, mode: ConstellationMatch) -> Result<f64> {
    if bins == 0 {
        return Err(Error::Domain("zero bins".into()));
    }
    if p_hat.len() != w.len() {
        return Err(Error::InvalidPattern(format!(
            "constellation has {} entries for {} neurons",
            w.len(),
            p_hat.len()
        )));
    }
    let prob: f64 = p_hat
        .iter()
        .zip(w.bits())
        .map(|(&p, &on)| match (on, mode) {
            (true, _) => p,
            (false, ConstellationMatch::Exact) => 1.0 - p,
            (false, ConstellationMatch::Marginal) => 1.0,
        })
        .product();
    Ok(bins as f64 * prob)
}

/// Two-sided Poisson p-value `min(1, 2 min(P(X < obs), P(X > obs)))`: the
/// smallest level at which the quantile rule rejects.
pub fn ue_p_value(mean: f64, observed: u64) -> f64 {
    if mean == 0.0 {
        return if observed == 0 { 1.0 } else { 0.0 };
    }
    let below = if observed == 0 {
        0.0
    } else {
        poisson_cdf(mean, observed - 1)
    };
    let above = 1.0 - poisson_cdf(mean, observed);
    (2.0 * below.min(above)).clamp(0.0, 1.0)
}

/// Rejects when the total is at least `q_{1-alpha/2}` or at most `q_{alpha/2}`,
/// the quantiles of `Poisson(M m_hat)`.
pub fn ue_quantile_rule(mean: f64, observed: u64, alpha: f64) -> bool {
    if mean == 0.0 {
        return observed > 0;
    }
    observed >= poisson_quantile(mean, 1.0 - alpha / 2.0) || observed <= poisson_quantile(mean, alpha / 2.0)
}

fn ue_outcome(s: &UeSummary, per_trial_mean: f64, alpha: f64) -> TestOutcome {
    let mean = s.trials as f64 * per_trial_mean;
    let observed = s.observed;
    let p_value = ue_p_value(mean, observed);
    let reject = p_value <= alpha;
    let excess = observed as f64 - mean;
    let statistic = if mean > 0.0 {
        excess / mean.sqrt()
    } else if observed > 0 {
        f64::INFINITY
    } else {
        0.0
    };
    let mut flags = Vec::new();
    if mean == 0.0 && observed > 0 {
        flags.push(Flag::DegenerateNull);
    }
    TestOutcome {
        statistic,
        p_value,
        reject,
        sign: Sign::of(excess, reject),
        excess,
        flags,
    }
}

/// UE test of constellation `w` over all neurons of `ts`.
pub fn ue_test_constellation(
    ts: &TrialSet,
    w: &Constellation,
    bin_width: f64,
    alpha: f64,
    mode: ConstellationMatch,
) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let s = ue_summarize(ts, w, bin_width, mode)?;
    let expected = ue_expected_count(&s.p_hat, s.bins_per_trial, w, mode)?;
    Ok(ue_outcome(&s, expected, alpha))
}

fn restrict(ts: &TrialSet, subset: &PatternSubset) -> Result<TrialSet> {
    let trials = ts
        .trials()
        .iter()
        .map(|t| {
            let trains: Vec<SpikeTrain> = subset.indices().iter().map(|&i| t.train(i).clone()).collect();
            Trial::from_parts_unchecked(*t.window(), trains)
        })
        .collect();
    TrialSet::new(trials)
}

/// UE test of the pattern `subset`: the data are restricted to its neurons
/// and the all-ones constellation is counted.
pub fn ue_test(ts: &TrialSet, subset: &PatternSubset, bin_width: f64, alpha: f64) -> Result<TestOutcome> {
    check_subset(ts, subset)?;
    let sub = restrict(ts, subset)?;
    let w = Constellation::new(vec![true; subset.len()]);
    ue_test_constellation(&sub, &w, bin_width, alpha, ConstellationMatch::Exact)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BhResult {
    pub q: f64,
    /// Indices into the input, ordered by increasing p-value.
    pub order: Vec<usize>,
    pub sorted_p: Vec<f64>,
    /// 1-based rank of the largest `P_(k) <= k q / K`.
    pub k0: Option<usize>,
    /// Indices of rejected tests, ascending.
    pub rejected: Vec<usize>,
}

/// Benjamini–Hochberg step-up procedure at FDR level `q`.
pub fn bh_procedure(pvalues: &[f64], q: f64) -> Result<BhResult> {
    if pvalues.is_empty() {
        return Err(Error::Domain("no p-values".into()));
    }
    if let Some(p) = pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Domain(format!("p-value {p} outside [0, 1]")));
    }
    let k_total = pvalues.len() as f64;
    let mut order: Vec<usize> = (0..pvalues.len()).collect();
    order.sort_by(|&i, &j| pvalues[i].total_cmp(&pvalues[j]).then(i.cmp(&j)));
    let sorted_p: Vec<f64> = order.iter().map(|&i| pvalues[i]).collect();
    let k0 = (1..=sorted_p.len())
        .rev()
        .find(|&k| sorted_p[k - 1] <= k as f64 * q / k_total);
    let rejected = match k0 {
        Some(k) => {
            let cut = sorted_p[k - 1];
            (0..pvalues.len()).filter(|&i| pvalues[i] <= cut).collect()
        }
        None => Vec::new(),
    };
    Ok(BhResult {
        q,
        order,
        sorted_p,
        k0,
        rejected,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Gaue,
    Ue,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaue" => Ok(Method::Gaue),
            "ue" => Ok(Method::Ue),
            _ => Err(Error::Parse(format!("unknown method {s:?}"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Gaue => "gaue",
            Method::Ue => "ue",
        })
    }
}

/// Settings shared by single- and multi-pattern tests.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestSettings {
    pub method: Method,
    pub delta: f64,
    /// UE bin width; `None` means [`default_bin_width`].
    pub bin_width: Option<f64>,
}

impl TestSettings {
    pub fn new(method: Method, delta: f64) -> Self {
        Self {
            method,
            delta,
            bin_width: None,
        }
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width.unwrap_or_else(|| default_bin_width(self.delta))
    }
}

/// Runs the configured test on one pattern.
pub fn run_test(ts: &TrialSet, subset: &PatternSubset, settings: &TestSettings, alpha: f64) -> Result<TestOutcome> {
    match settings.method {
        Method::Gaue => gaue_test(ts, subset, settings.delta, alpha),
        Method::Ue => ue_test(ts, subset, settings.bin_width(), alpha),
    }
}

/// Like [`run_test`], but zero intensities and degenerate variances become
/// `p = 1` with a flag.
pub fn run_test_flagged(
    ts: &TrialSet,
    subset: &PatternSubset,
    settings: &TestSettings,
    alpha: f64,
) -> Result<TestOutcome> {
    match run_test(ts, subset, settings, alpha) {
        Ok(o) => Ok(o),
        Err(e) if e.is_degenerate() => Ok(TestOutcome {
            statistic: f64::NAN,
            p_value: 1.0,
            reject: false,
            sign: Sign::None,
            excess: 0.0,
            flags: vec![match e {
                Error::ZeroIntensity { .. } => Flag::ZeroIntensity,
                _ => Flag::DegenerateVariance,
            }],
        }),
        Err(e) => Err(e),
    }
}

/// One row of a multi-pattern report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternResult {
    pub pattern: PatternSubset,
    /// `null` when the test was degenerate.
    pub statistic: Option<f64>,
    pub p: f64,
    /// Benjamini–Hochberg decision.
    pub reject: bool,
    pub sign: Sign,
    pub flags: Vec<Flag>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiPatternReport {
    pub method: Method,
    pub q: f64,
    pub patterns: Vec<PatternResult>,
    pub bh: BhResult,
}

impl MultiPatternReport {
    pub fn has_flags(&self) -> bool {
        self.patterns.iter().any(|p| !p.flags.is_empty())
    }
}

/// Tests every pattern of at least two neurons, then applies
/// Benjamini–Hochberg at level `q`.
pub fn multi_pattern_test(
    ts: &TrialSet,
    settings: &TestSettings,
    q: f64,
    neuron_cap: usize,
    exec: Execution,
) -> Result<MultiPatternReport> {
    let n = ts.neuron_count();
    if n < 2 {
        return Err(Error::InvalidPattern("need at least 2 neurons".into()));
    }
    if n > neuron_cap {
        return Err(Error::CapExceeded {
            size: (1u128 << n) - n as u128 - 1,
            cap: (1u128 << neuron_cap) - neuron_cap as u128 - 1,
        });
    }
    check_alpha(q)?;
    let patterns: Vec<PatternSubset> = PatternSubset::all(n).into_iter().filter(|p| p.len() >= 2).collect();
    let outcomes = exec
        .map_slice(&patterns, |p| run_test_flagged(ts, p, settings, q))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let pvalues: Vec<f64> = outcomes.iter().map(|o| o.p_value).collect();
    let bh = bh_procedure(&pvalues, q)?;
    let mut rejected = vec![false; patterns.len()];
    bh.rejected.iter().for_each(|&i| rejected[i] = true);
    let patterns = patterns
        .into_iter()
        .zip(outcomes)
        .zip(rejected)
        .map(|((pattern, o), reject)| PatternResult {
            pattern,
            statistic: o.statistic.is_finite().then_some(o.statistic),
            p: o.p_value,
            reject,
            sign: Sign::of(o.excess, reject),
            flags: o.flags,
        })
        .collect();
    Ok(MultiPatternReport {
        method: settings.method,
        q,
        patterns,
        bh,
    })
}

/// `z_{1 - alpha/2}`.
pub fn gaue_critical_value(alpha: f64) -> f64 {
    normal_quantile(1.0 - alpha / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spike_data::{trial_set_from_vecs, Window};
    use proptest::prelude::*;

    fn ts(window: (f64, f64), trials: Vec<Vec<Vec<f64>>>) -> TrialSet {
        trial_set_from_vecs(Window::new(window.0, window.1).unwrap(), trials).unwrap()
    }

    fn pair() -> PatternSubset {
        PatternSubset::new(vec![0, 1], 2).unwrap()
    }

    #[test]
    fn lambdas_of_empty_data_are_zero() {
        let d = ts((0.0, 1.0), vec![vec![vec![], vec![]]]);
        assert_eq!(estimate_lambdas(&d, &pair()).0, vec![0.0, 0.0]);
    }

    #[test]
    fn lambda_single_trial() {
        let times: Vec<f64> = (0..10).map(|i| 0.01 + 0.04 * i as f64).collect();
        let d = ts((0.0, 0.5), vec![vec![times, vec![]]]);
        assert!((estimate_lambdas(&d, &pair()).0[0] - 20.0).abs() < 1e-12);
    }

    #[test]
    fn lambda_pooled_over_trials() {
        let d = ts(
            (0.0, 1.0),
            vec![
                vec![vec![0.1, 0.2, 0.3], vec![]],
                vec![vec![0.1, 0.2, 0.3, 0.4, 0.5], vec![]],
            ],
        );
        assert_eq!(estimate_lambdas(&d, &pair()).0[0], 4.0);
    }

    #[test]
    fn empty_train_is_zero_intensity() {
        let d = ts((0.0, 1.0), vec![vec![vec![0.1], vec![]], vec![vec![0.5], vec![]]]);
        let e = gaue_compute(&d, &pair(), 0.01).unwrap_err();
        assert!(matches!(e, Error::ZeroIntensity { neuron: 2 }));
        assert!(e.is_degenerate());
    }

    #[test]
    fn gaue_needs_two_trials() {
        let d = ts((0.0, 1.0), vec![vec![vec![0.1], vec![0.2]]]);
        assert!(gaue_compute(&d, &pair(), 0.01).is_err());
    }

    #[test]
    fn statistic_is_zero_when_mean_matches_expectation() {
        // window 1, delta 0.25: I(2,0) = 2 delta T - delta^2 = 0.4375
        // with 4 spikes each over 2 trials lambda = (2, 2), m0 = 1.75
        let g = GaueComputation {
            m_bar: 1.75,
            lambda_hats: vec![2.0, 2.0],
            m0_hat: 1.75,
            v_hat: 2.0,
            sigma2_hat: 1.0,
            statistic: 0.0,
            trials: 2,
        };
        let o = gaue_outcome(&g, 0.05);
        assert_eq!(o.p_value, 1.0);
        assert!(!o.reject);
        assert_eq!(o.sign, Sign::None);
    }

    #[test]
    fn gaue_compute_by_hand() {
        // T = 1, delta = 0.1; neuron 1 at 0.2 / 0.6, neuron 2 at 0.25 / 0.9
        let d = ts(
            (0.0, 1.0),
            vec![vec![vec![0.2], vec![0.25]], vec![vec![0.6], vec![0.9]]],
        );
        let g = gaue_compute(&d, &pair(), 0.1).unwrap();
        assert_eq!(g.m_bar, 0.5);
        assert_eq!(g.lambda_hats, vec![1.0, 1.0]);
        // I(2,0) = 2 delta T - delta^2; I(2,1) = 4 delta^2 T - 10 delta^3 / 3
        // (neighbourhood measure squared, minus the deficit near both edges)
        let i20 = 0.19;
        let i21 = 0.01 * (4.0 - 1.0 / 3.0);
        assert!((g.m0_hat - i20).abs() < 1e-15);
        assert!((g.v_hat - (i20 + 2.0 * i21)).abs() < 1e-15);
        let sigma2 = i20 + 2.0 * i21 - i20 * i20 * 2.0;
        assert!((g.sigma2_hat - sigma2).abs() < 1e-15);
        let stat = 2f64.sqrt() * (0.5 - i20) / sigma2.sqrt();
        assert!((g.statistic - stat).abs() < 1e-12);
    }

    #[test]
    fn plug_in_variance_stays_positive() {
        let subset = PatternSubset::new(vec![0, 1, 2], 3).unwrap();
        for trials in [2, 5, 40] {
            let d = sample_set(3, trials);
            for delta in [0.001, 0.05, 0.3, 0.49] {
                let g = gaue_compute(&d, &subset, delta).unwrap();
                assert!(g.sigma2_hat > 0.0 && g.statistic.is_finite());
            }
        }
    }

    #[test]
    fn critical_value_gives_level() {
        let z = gaue_critical_value(0.05);
        assert!((z - 1.959_963_984_540_054).abs() < 1e-9);
        assert!((two_sided_normal_p(1.959_963_984_540_054) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn ue_expected_examples() {
        let w = Constellation::new(vec![true, true]);
        assert_eq!(ue_expected_count(&[0.5, 0.5], 20, &w, ConstellationMatch::Exact).unwrap(), 5.0);
        let w = Constellation::new(vec![true, true, false]);
        assert_eq!(
            ue_expected_count(&[0.5, 0.5, 0.5], 20, &w, ConstellationMatch::Exact).unwrap(),
            2.5
        );
        assert_eq!(
            ue_expected_count(&[0.5, 0.5, 0.5], 20, &w, ConstellationMatch::Marginal).unwrap(),
            5.0
        );
        let w = Constellation::new(vec![true, true]);
        assert_eq!(ue_expected_count(&[0.0, 0.7], 20, &w, ConstellationMatch::Exact).unwrap(), 0.0);
        assert!(ue_expected_count(&[0.5, 0.5], 0, &w, ConstellationMatch::Exact).is_err());
    }

    #[test]
    fn ue_p_values() {
        // observed equal to an integer mean sits in the middle
        assert!(ue_p_value(5.0, 5) > 0.05);
        assert!(!ue_quantile_rule(5.0, 5, 0.05));
        // q_{0.975}(Poisson(5)) = 10
        assert!(ue_quantile_rule(5.0, 13, 0.05));
        assert!(ue_p_value(5.0, 13) <= 0.05);
        assert!(ue_quantile_rule(5.0, 10, 0.05));
        assert!(!ue_quantile_rule(5.0, 9, 0.05));
        assert_eq!(ue_p_value(0.0, 0), 1.0);
        assert_eq!(ue_p_value(0.0, 3), 0.0);
    }

    #[test]
    fn ue_rule_and_p_value_agree() {
        for &mean in &[0.3, 1.0, 4.2, 17.0, 60.0] {
            for obs in 0..150 {
                for &alpha in &[0.01, 0.05, 0.2] {
                    assert_eq!(
                        ue_quantile_rule(mean, obs, alpha),
                        ue_p_value(mean, obs) <= alpha,
                        "mean {mean} obs {obs} alpha {alpha}"
                    );
                }
            }
        }
    }

    #[test]
    fn ue_zero_mean_conventions() {
        // neuron 2 never fires: expectation 0, nothing observed
        let d = ts((0.0, 1.0), vec![vec![vec![0.05], vec![]], vec![vec![0.5], vec![]]]);
        let o = ue_test(&d, &pair(), 0.1, 0.05).unwrap();
        assert_eq!(o.p_value, 1.0);
        assert!(!o.reject && o.flags.is_empty());
        let s = UeSummary {
            bins_per_trial: 10,
            p_hat: vec![0.0, 0.5],
            observed: 2,
            trials: 3,
        };
        let o = ue_outcome(&s, 0.0, 0.05);
        assert_eq!(o.p_value, 0.0);
        assert!(o.reject);
        assert_eq!(o.flags, vec![Flag::DegenerateNull]);
    }

    #[test]
    fn marginal_and_exact_constellations_differ() {
        let d = ts(
            (0.0, 1.0),
            vec![vec![vec![0.05, 0.45], vec![0.05, 0.45], vec![0.05]]],
        );
        let w = Constellation::new(vec![true, true, false]);
        let exact = ue_summarize(&d, &w, 0.1, ConstellationMatch::Exact).unwrap();
        let marginal = ue_summarize(&d, &w, 0.1, ConstellationMatch::Marginal).unwrap();
        assert_eq!((exact.observed, marginal.observed), (1, 2));
        assert_eq!(exact.bins_per_trial, 10);
        assert_eq!(exact.p_hat, vec![0.2, 0.2, 0.1]);
    }

    #[test]
    fn ue_detects_synchrony() {
        let trials = (0..20)
            .map(|k| {
                let t: Vec<f64> = (0..10).map(|i| 0.01 + 0.1 * i as f64 + 0.001 * (k % 3) as f64).collect();
                vec![t.clone(), t]
            })
            .collect();
        let d = ts((0.0, 1.0), trials);
        let o = ue_test(&d, &pair(), 0.02, 0.05).unwrap();
        assert!(o.reject);
        assert_eq!(o.sign, Sign::Excitatory);
    }

    #[test]
    fn bh_examples() {
        let r = bh_procedure(&[1.0, 1.0, 1.0], 0.05).unwrap();
        assert!(r.rejected.is_empty() && r.k0.is_none());
        let r = bh_procedure(&[0.0; 5], 0.05).unwrap();
        assert_eq!(r.rejected, vec![0, 1, 2, 3, 4]);
        let r = bh_procedure(&[0.001, 0.01, 0.02, 0.9], 0.05).unwrap();
        assert_eq!(r.k0, Some(3));
        assert_eq!(r.rejected, vec![0, 1, 2]);
        let r = bh_procedure(&[0.9, 0.02, 0.001, 0.01], 0.05).unwrap();
        assert_eq!(r.rejected, vec![1, 2, 3]);
        assert_eq!(r.sorted_p, vec![0.001, 0.01, 0.02, 0.9]);
    }

    #[test]
    fn bh_step_up_rejects_below_k0_even_above_their_threshold() {
        // P(1) = 0.03 > 0.05/4 but P(2) = 0.024 ... ordering: 0.02, 0.024, 0.03, 0.04
        // thresholds 0.0125, 0.025, 0.0375, 0.05: k0 = 4
        let r = bh_procedure(&[0.04, 0.02, 0.03, 0.024], 0.05).unwrap();
        assert_eq!(r.k0, Some(4));
        assert_eq!(r.rejected.len(), 4);
    }

    #[test]
    fn bh_rejects_bad_input() {
        assert!(bh_procedure(&[], 0.05).is_err());
        assert!(bh_procedure(&[1.2], 0.05).is_err());
    }

    fn sample_set(n: usize, trials: usize) -> TrialSet {
        let mut seed = 12345u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        let data = (0..trials)
            .map(|_| {
                (0..n)
                    .map(|_| {
                        let mut t: Vec<f64> = (0..8).map(|_| next()).collect();
                        t.sort_by(f64::total_cmp);
                        t
                    })
                    .collect()
            })
            .collect();
        ts((0.0, 1.0), data)
    }

    #[test]
    fn multi_pattern_counts() {
        let d = sample_set(4, 30);
        let settings = TestSettings::new(Method::Gaue, 0.01);
        let r = multi_pattern_test(&d, &settings, 0.05, 10, Execution::Sequential).unwrap();
        assert_eq!(r.patterns.len(), 11);
        let par = multi_pattern_test(&d, &settings, 0.05, 10, Execution::Parallel).unwrap();
        assert_eq!(serde_json::to_string(&r).unwrap(), serde_json::to_string(&par).unwrap());
        let d2 = sample_set(2, 30);
        let r = multi_pattern_test(&d2, &settings, 0.05, 10, Execution::Sequential).unwrap();
        assert_eq!(r.patterns.len(), 1);
        let single = gaue_test(&d2, &pair(), 0.01, 0.05).unwrap();
        assert_eq!(r.patterns[0].reject, single.reject);
        assert!(multi_pattern_test(&d, &settings, 0.05, 3, Execution::Sequential).is_err());
    }

    #[test]
    fn multi_pattern_flags_degenerate_patterns() {
        let mut raw = sample_set(3, 10).to_raw();
        for trial in raw.trials.iter_mut() {
            trial[2].clear();
        }
        let d = TrialSet::try_from(raw).unwrap();
        let settings = TestSettings::new(Method::Gaue, 0.01);
        let r = multi_pattern_test(&d, &settings, 0.05, 10, Execution::Sequential).unwrap();
        let flagged: Vec<_> = r.patterns.iter().filter(|p| !p.flags.is_empty()).collect();
        assert_eq!(flagged.len(), 3);
        assert!(flagged.iter().all(|p| p.p == 1.0 && p.statistic.is_none()));
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["patterns"][0]["pattern"], serde_json::json!([1, 2]));
    }

    proptest! {
        #[test]
        fn bh_single_test_is_level_q(p in 0.0f64..=1.0, q in 0.001f64..0.5) {
            let r = bh_procedure(&[p], q).unwrap();
            prop_assert_eq!(r.rejected.len() == 1, p <= q);
        }

        #[test]
        fn bh_monotone_in_q(ps in prop::collection::vec(0.0f64..=1.0, 1..30), q1 in 0.001f64..0.5, dq in 0.0f64..0.5) {
            let a = bh_procedure(&ps, q1).unwrap();
            let b = bh_procedure(&ps, q1 + dq).unwrap();
            prop_assert!(a.rejected.iter().all(|i| b.rejected.contains(i)));
        }

        #[test]
        fn bh_rejected_are_a_prefix_of_the_order(ps in prop::collection::vec(0.0f64..=1.0, 1..30), q in 0.001f64..0.5) {
            let r = bh_procedure(&ps, q).unwrap();
            if let Some(k0) = r.k0 {
                let cut = r.sorted_p[k0 - 1];
                prop_assert!(r.rejected.iter().all(|&i| ps[i] <= cut));
                prop_assert!(r.rejected.len() >= k0);
            }
        }

        #[test]
        fn gaue_p_decreases_in_abs_statistic(a in 0.0f64..10.0, b in 0.0f64..10.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(two_sided_normal_p(hi) <= two_sided_normal_p(lo));
            prop_assert_eq!(two_sided_normal_p(-hi), two_sided_normal_p(hi));
        }

        #[test]
        fn gaue_statistic_scale_invariant(seed in 0u64..500, exp in -4i32..5) {
            let d = sample_set(3, 12 + (seed % 5) as usize);
            let subset = PatternSubset::new(vec![0, 1, 2], 3).unwrap();
            let base = gaue_compute(&d, &subset, 0.05);
            let s = 2f64.powi(exp);
            let scaled = TrialSet::new(d.trials().iter().map(|t| t.scaled(s).unwrap()).collect()).unwrap();
            let other = gaue_compute(&scaled, &subset, 0.05 * s);
            match (base, other) {
                (Ok(x), Ok(y)) => {
                    let ulps = (x.statistic.to_bits() as i64 - y.statistic.to_bits() as i64).abs();
                    prop_assert!(ulps <= 10, "{} vs {}", x.statistic, y.statistic);
                }
                (Err(_), Err(_)) => {}
                (x, y) => prop_assert!(false, "{x:?} vs {y:?}"),
            }
        }
    }
}
