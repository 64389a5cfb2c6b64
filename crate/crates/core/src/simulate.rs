//! Trial generators: homogeneous Poisson, Poisson with a shared injected
//! process, and multivariate Hawkes processes with piecewise-constant kernels
//! simulated by Ogata thinning.
//!
//! The four simulation frameworks:
//!
//! | framework | model |
//! |-----------|-------|
//! | F1 | independent Poisson, rates `U(8,20)` Hz, duration `U(0.2,0.4)` s |
//! | F2 | F1 plus a 0.3 Hz Poisson process copied into every neuron |
//! | F3 | Hawkes, `mu ~ U(8,20)`, refractory `h_ii = -mu_i 1[0,0.003]` |
//! | F4 | F3 plus `beta 1[0,0.005]` on 1→3, 2→3, 1→4, 2→4, 3→4, `beta ~ U(20,30)` |

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::rng::{substream, PARAMETER_STREAM};
use crate::spike_data::{SpikeTrain, Trial, TrialSet, Window};

/// Delay used throughout the simulation studies.
pub const DEFAULT_DELTA: f64 = 0.01;
pub const DEFAULT_INJECT_RATE: f64 = 0.3;
pub const DEFAULT_EVENT_CAP: usize = 1_000_000;
pub const REFRACTORY_PERIOD: f64 = 0.003;
pub const INTERACTION_SUPPORT: f64 = 0.005;

fn uniform_times(count: usize, window: &Window, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let mut times: Vec<f64> = (0..count)
            .map(|_| rng.random_range(window.a()..=window.b()))
            .collect();
        times.sort_by(f64::total_cmp);
        // a tie has probability ~2^-50 per pair; redraw rather than emit it
        if times.windows(2).all(|w| w[0] < w[1]) {
            return times;
        }
    }
}

fn poisson_count(mean: f64, rng: &mut ChaCha8Rng) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as usize).unwrap_or(0)
}

/// Homogeneous Poisson train with `rate` Hz on `window`.
pub fn sim_poisson(rate: f64, window: &Window, rng: &mut ChaCha8Rng) -> SpikeTrain {
    let count = poisson_count(rate * window.length(), rng);
    SpikeTrain::from_sorted_unchecked(uniform_times(count, window, rng))
}

/// Independent Poisson trains plus one shared Poisson train of rate
/// `inject_rate` merged into every neuron.
pub fn sim_injection(base_rates: &[f64], inject_rate: f64, window: &Window, rng: &mut ChaCha8Rng) -> Trial {
    let base: Vec<SpikeTrain> = base_rates
        .iter()
        .map(|&r| sim_poisson(r, window, rng))
        .collect();
    let injected = sim_poisson(inject_rate, window, rng);
    let trains = base
        .into_iter()
        .map(|train| {
            let mut times: Vec<f64> = train.times().iter().chain(injected.times()).copied().collect();
            times.sort_by(f64::total_cmp);
            times.dedup();
            SpikeTrain::from_sorted_unchecked(times)
        })
        .collect();
    Trial::from_parts_unchecked(*window, trains)
}

/// `height * 1[0, support]`; negative height inhibits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstKernel {
    pub height: f64,
    pub support: f64,
}

impl PiecewiseConstKernel {
    pub fn new(height: f64, support: f64) -> Result<Self> {
        if support > 0.0 && height.is_finite() {
            Ok(Self { height, support })
        } else {
            Err(Error::Domain(format!(
                "kernel needs support > 0 and finite height, got ({height}, {support})"
            )))
        }
    }
}

/// Multivariate Hawkes model; `kernels[i][j]` is the influence of `i` on `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HawkesModel {
    pub mu: Vec<f64>,
    pub kernels: Vec<Vec<Option<PiecewiseConstKernel>>>,
}

impl HawkesModel {
    pub fn new(mu: Vec<f64>, kernels: Vec<Vec<Option<PiecewiseConstKernel>>>) -> Result<Self> {
        let n = mu.len();
        if n == 0 || kernels.len() != n || kernels.iter().any(|row| row.len() != n) {
            return Err(Error::Domain("kernel matrix must be n x n with n >= 1".into()));
        }
        if mu.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(Error::Domain("spontaneous rates must be finite and >= 0".into()));
        }
        Ok(Self { mu, kernels })
    }

    /// No kernels at all: independent homogeneous Poisson processes.
    pub fn poisson(mu: Vec<f64>) -> Result<Self> {
        let n = mu.len();
        Self::new(mu, vec![vec![None; n]; n])
    }

    /// Independent neurons with a strict dead time `x`: `h_ii = -mu_i 1[0,x]`.
    pub fn dead_time(mu: Vec<f64>, x: f64) -> Result<Self> {
        let n = mu.len();
        let mut kernels = vec![vec![None; n]; n];
        for (i, &m) in mu.iter().enumerate() {
            kernels[i][i] = Some(PiecewiseConstKernel::new(-m, x)?);
        }
        Self::new(mu, kernels)
    }

    /// The four-neuron excitation graph 1→3, 2→3, 1→4, 2→4, 3→4 with height
    /// `beta`, and refractory kernels `-(mu_i + m_i beta)` where `m_i` counts
    /// the neurons exciting `i`.
    pub fn excitation_graph(mu: Vec<f64>, beta: f64) -> Result<Self> {
        if mu.len() != 4 {
            return Err(Error::Domain("the excitation graph has exactly 4 neurons".into()));
        }
        let mut kernels = vec![vec![None; 4]; 4];
        for &(from, to) in EXCITATION_EDGES.iter() {
            kernels[from][to] = Some(PiecewiseConstKernel::new(beta, INTERACTION_SUPPORT)?);
        }
        for i in 0..4 {
            let inputs = EXCITATION_EDGES.iter().filter(|&&(_, to)| to == i).count() as f64;
            kernels[i][i] = Some(PiecewiseConstKernel::new(
                -(mu[i] + inputs * beta),
                REFRACTORY_PERIOD,
            )?);
        }
        Self::new(mu, kernels)
    }

    pub fn neuron_count(&self) -> usize {
        self.mu.len()
    }

    /// True iff no off-diagonal kernel is present.
    pub fn is_independent(&self) -> bool {
        self.kernels
            .iter()
            .enumerate()
            .all(|(i, row)| row.iter().enumerate().all(|(j, k)| i == j || k.is_none()))
    }

    fn max_support(&self) -> f64 {
        self.kernels
            .iter()
            .flatten()
            .flatten()
            .map(|k| k.support)
            .fold(0.0, f64::max)
    }
}

/// 0-based `(source, target)` pairs of the excitation graph.
pub const EXCITATION_EDGES: [(usize, usize); 5] = [(0, 2), (1, 2), (0, 3), (1, 3), (2, 3)];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HawkesOptions {
    pub event_cap: usize,
    /// Simulated time before `a` whose events feed the intensity but are dropped.
    pub burn_in: f64,
}

impl Default for HawkesOptions {
    fn default() -> Self {
        Self {
            event_cap: DEFAULT_EVENT_CAP,
            burn_in: 0.0,
        }
    }
}

/// Counters from one thinning run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ThinningStats {
    pub candidates: u64,
    pub accepted: u64,
}

struct History<'m> {
    model: &'m HawkesModel,
    events: Vec<(f64, usize)>,
    /// Index of the oldest event that may still be inside some kernel support.
    live_from: usize,
    horizon: f64,
}

impl<'m> History<'m> {
    fn new(model: &'m HawkesModel) -> Self {
        Self {
            model,
            events: Vec::new(),
            live_from: 0,
            horizon: model.max_support(),
        }
    }

    fn advance(&mut self, t: f64) {
        while self.live_from < self.events.len() && t - self.events[self.live_from].0 > self.horizon {
            self.live_from += 1;
        }
    }

    fn live(&self) -> &[(f64, usize)] {
        &self.events[self.live_from..]
    }

    /// Exact conditional intensities at `t` (after `advance(t)`).
    fn intensities(&self, t: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.model.mu);
        for &(s, i) in self.live() {
            let lag = t - s;
            for (j, slot) in out.iter_mut().enumerate() {
                if let Some(k) = self.model.kernels[i][j] {
                    if lag > 0.0 && lag <= k.support {
                        *slot += k.height;
                    }
                }
            }
        }
        out.iter_mut().for_each(|x| *x = x.max(0.0));
    }

    /// Upper bound on the total intensity from `t` until the next event:
    /// excitatory terms active now can only expire, and expiring inhibition
    /// never lifts a neuron above `mu_j` plus its active excitation.
    fn bound(&self, t: f64, scratch: &mut [f64]) -> f64 {
        scratch.copy_from_slice(&self.model.mu);
        for &(s, i) in self.live() {
            let lag = t - s;
            for (j, slot) in scratch.iter_mut().enumerate() {
                if let Some(k) = self.model.kernels[i][j] {
                    if k.height > 0.0 && lag <= k.support {
                        *slot += k.height;
                    }
                }
            }
        }
        scratch.iter().map(|x| x.max(0.0)).sum()
    }
}

/// Ogata thinning on `window`; history before `a - burn_in` is empty.
pub fn sim_hawkes(
    model: &HawkesModel,
    window: &Window,
    opts: HawkesOptions,
    rng: &mut ChaCha8Rng,
) -> Result<(Trial, ThinningStats)> {
    let n = model.neuron_count();
    let mut history = History::new(model);
    let mut lambda = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut stats = ThinningStats::default();
    let mut t = window.a() - opts.burn_in.max(0.0);
    loop {
        history.advance(t);
        let bound = history.bound(t, &mut scratch);
        if bound <= 0.0 {
            break;
        }
        t += Exp::new(bound).expect("positive rate").sample(rng);
        if t > window.b() {
            break;
        }
        stats.candidates += 1;
        history.advance(t);
        history.intensities(t, &mut lambda);
        let total: f64 = lambda.iter().sum();
        let ratio = total / bound;
        assert!(
            (0.0..=1.0 + 1e-12).contains(&ratio),
            "thinning bound violated: ratio {ratio}"
        );
        if rng.random::<f64>() * bound < total {
            let mut pick = rng.random::<f64>() * total;
            let mut j = 0;
            while j + 1 < n && (pick >= lambda[j] || lambda[j] == 0.0) {
                pick -= lambda[j];
                j += 1;
            }
            while lambda[j] == 0.0 {
                j -= 1;
            }
            history.events.push((t, j));
            stats.accepted += 1;
            if history.events.len() > opts.event_cap {
                return Err(Error::Explosion { cap: opts.event_cap });
            }
        }
    }
    let mut trains = vec![Vec::new(); n];
    for &(s, j) in &history.events {
        if s >= window.a() {
            trains[j].push(s);
        }
    }
    let trains = trains
        .into_iter()
        .map(|mut ts| {
            ts.dedup();
            SpikeTrain::from_sorted_unchecked(ts)
        })
        .collect();
    Ok((Trial::from_parts_unchecked(*window, trains), stats))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Framework {
    F1,
    F2,
    F3,
    F4,
}

impl std::str::FromStr for Framework {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "F1" => Ok(Framework::F1),
            "F2" => Ok(Framework::F2),
            "F3" => Ok(Framework::F3),
            "F4" => Ok(Framework::F4),
            _ => Err(Error::Parse(format!("unknown framework {s:?}"))),
        }
    }
}

impl std::fmt::Display for Framework {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Fixed values replacing the random draws (parameter scans).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    pub duration: Option<f64>,
    /// Common rate (F1/F2) or spontaneous intensity (F3/F4) for every neuron.
    pub rate: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameworkConfig {
    pub framework: Framework,
    pub seed: u64,
    pub trials: usize,
    pub neuron_count: usize,
    pub overrides: Overrides,
    pub inject_rate: f64,
    pub hawkes: HawkesOptions,
}

impl FrameworkConfig {
    pub fn new(framework: Framework, seed: u64, trials: usize) -> Self {
        Self {
            framework,
            seed,
            trials,
            neuron_count: 4,
            overrides: Overrides::default(),
            inject_rate: DEFAULT_INJECT_RATE,
            hawkes: HawkesOptions::default(),
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Domain("need at least one trial".into()));
        }
        if self.neuron_count < 2 {
            return Err(Error::Domain("need at least two neurons".into()));
        }
        if self.framework == Framework::F4 && self.neuron_count != 4 {
            return Err(Error::Domain("F4 is defined for exactly 4 neurons".into()));
        }
        if let Some(d) = self.overrides.duration {
            if !(d > 2.0 * DEFAULT_DELTA) {
                return Err(Error::Domain(format!("duration {d} must exceed 2 delta")));
            }
        }
        if let Some(r) = self.overrides.rate {
            if !(r >= 0.0) {
                return Err(Error::Domain(format!("rate {r} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// One draw of the framework's random parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledParameters {
    pub framework: Framework,
    pub duration: f64,
    /// Poisson rates (F1/F2) or spontaneous intensities (F3/F4).
    pub rates: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub inject_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub beta: Option<f64>,
    pub delta: f64,
}

impl SampledParameters {
    pub fn window(&self) -> Window {
        Window::new(0.0, self.duration).expect("positive duration")
    }

    pub fn hawkes_model(&self) -> Result<Option<HawkesModel>> {
        match self.framework {
            Framework::F1 | Framework::F2 => Ok(None),
            Framework::F3 => HawkesModel::dead_time(self.rates.clone(), REFRACTORY_PERIOD).map(Some),
            Framework::F4 => {
                HawkesModel::excitation_graph(self.rates.clone(), self.beta.unwrap_or(0.0)).map(Some)
            }
        }
    }
}

/// Draws the parameters of repetition `repetition`.
pub fn sample_parameters(cfg: &FrameworkConfig, repetition: u64) -> SampledParameters {
    let mut rng = substream(cfg.seed, repetition, PARAMETER_STREAM);
    let duration = cfg
        .overrides
        .duration
        .unwrap_or_else(|| rng.random_range(0.2..=0.4));
    let rates = (0..cfg.neuron_count)
        .map(|_| cfg.overrides.rate.unwrap_or_else(|| rng.random_range(8.0..=20.0)))
        .collect();
    let beta = (cfg.framework == Framework::F4)
        .then(|| cfg.overrides.beta.unwrap_or_else(|| rng.random_range(20.0..=30.0)));
    SampledParameters {
        framework: cfg.framework,
        duration,
        rates,
        inject_rate: (cfg.framework == Framework::F2).then_some(cfg.inject_rate),
        beta,
        delta: DEFAULT_DELTA,
    }
}

/// `trials` trials from fixed parameters; trial `k` uses substream
/// `(seed, repetition, k)`.
pub fn simulate_trials(
    params: &SampledParameters,
    trials: usize,
    seed: u64,
    repetition: u64,
    hawkes: HawkesOptions,
    exec: Execution,
) -> Result<TrialSet> {
    let window = params.window();
    let model = params.hawkes_model()?;
    let generated: Vec<Result<Trial>> = exec.map_indices(trials, |k| {
        let mut rng = substream(seed, repetition, k as u64);
        match (&model, params.framework) {
            (Some(m), _) => sim_hawkes(m, &window, hawkes, &mut rng).map(|(t, _)| t),
            (None, Framework::F2) => Ok(sim_injection(
                &params.rates,
                params.inject_rate.unwrap_or(DEFAULT_INJECT_RATE),
                &window,
                &mut rng,
            )),
            (None, _) => Ok(Trial::from_parts_unchecked(
                window,
                params
                    .rates
                    .iter()
                    .map(|&r| sim_poisson(r, &window, &mut rng))
                    .collect(),
            )),
        }
    });
    TrialSet::new(generated.into_iter().collect::<Result<Vec<_>>>()?)
}

/// Procedure step 1 and 2: draw parameters, then `cfg.trials` trials.
pub fn sample_framework(
    cfg: &FrameworkConfig,
    repetition: u64,
    exec: Execution,
) -> Result<(TrialSet, SampledParameters)> {
    cfg.check()?;
    let params = sample_parameters(cfg, repetition);
    let ts = simulate_trials(&params, cfg.trials, cfg.seed, repetition, cfg.hawkes, exec)?;
    Ok((ts, params))
}
