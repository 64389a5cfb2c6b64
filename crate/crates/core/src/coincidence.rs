//! Coincidence counting.
//!
//! [`delayed_count`] is the production counter: it visits every spike of the
//! pattern as the potential minimum of a tuple and multiplies, per other
//! neuron, the number of spikes falling in the following window of length
//! `delta`. Each coincident tuple has a unique minimum (ties between neurons are
//! broken by position in the pattern), so every tuple is counted once.
//! [`delayed_count_bruteforce`] and [`generic_count`] enumerate the Cartesian
//! product and serve as references.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spike_data::{PatternSubset, Trial, Window};

/// Default cap on the number of tuples a brute-force enumeration may visit.
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceParams {
    pub delta: f64,
}

impl CoincidenceParams {
    pub fn new(delta: f64) -> Self {
        Self { delta }
    }

    /// Checks `0 < delta < (b - a) / 2`.
    pub fn check(&self, window: &Window) -> Result<()> {
        let half_width = window.length() / 2.0;
        if self.delta > 0.0 && self.delta < half_width {
            Ok(())
        } else {
            Err(Error::InvalidDelta {
                delta: self.delta,
                half_width,
            })
        }
    }
}

fn check_subset(trial: &Trial, subset: &PatternSubset) -> Result<()> {
    match subset.indices().last() {
        Some(&i) if i >= trial.neuron_count() => Err(Error::InvalidPattern(format!(
            "neuron {} out of range 1..={}",
            i + 1,
            trial.neuron_count()
        ))),
        _ => Ok(()),
    }
}

/// Number of tuples, one spike per neuron of `subset`, whose span is `<= delta`.
pub fn delayed_count(trial: &Trial, subset: &PatternSubset, params: CoincidenceParams) -> Result<u64> {
    params.check(trial.window())?;
    check_subset(trial, subset)?;
    Ok(delayed_count_unchecked(trial, subset, params.delta))
}

pub(crate) fn delayed_count_unchecked(trial: &Trial, subset: &PatternSubset, delta: f64) -> u64 {
    let trains: Vec<&[f64]> = subset
        .indices()
        .iter()
        .map(|&i| trial.train(i).times())
        .collect();
    count_sorted(&trains, delta)
}

/// Sweep over sorted trains. For anchor spike `t` of train `p`, trains before
/// `p` contribute spikes in `(t, t + delta]` and trains after `p` contribute
/// spikes in `[t, t + delta]`.
fn count_sorted(trains: &[&[f64]], delta: f64) -> u64 {
    if trains.iter().any(|t| t.is_empty()) {
        return 0;
    }
    let l = trains.len();
    let mut total = 0u64;
    // start[m]: first index with x >= t (or > t), end[m]: first index with x - t > delta
    let mut start = vec![0usize; l];
    let mut end = vec![0usize; l];
    for (p, anchor_train) in trains.iter().enumerate() {
        start.iter_mut().for_each(|s| *s = 0);
        end.iter_mut().for_each(|e| *e = 0);
        for &t in anchor_train.iter() {
            let mut product = 1u64;
            for (m, other) in trains.iter().enumerate() {
                if m == p {
                    continue;
                }
                let s = &mut start[m];
                if m < p {
                    while *s < other.len() && other[*s] <= t {
                        *s += 1;
                    }
                } else {
                    while *s < other.len() && other[*s] < t {
                        *s += 1;
                    }
                }
                let e = &mut end[m];
                if *e < *s {
                    *e = *s;
                }
                while *e < other.len() && other[*e] - t <= delta {
                    *e += 1;
                }
                product *= (*e - *s) as u64;
                if product == 0 {
                    break;
                }
            }
            total += product;
        }
    }
    total
}

fn product_size(trial: &Trial, subset: &PatternSubset) -> u128 {
    subset
        .indices()
        .iter()
        .map(|&i| trial.train(i).len() as u128)
        .product()
}

/// Calls `visit` with every tuple of the Cartesian product of `subset`'s trains.
fn for_each_tuple(
    trial: &Trial,
    subset: &PatternSubset,
    cap: u128,
    mut visit: impl FnMut(&[f64]) -> Result<()>,
) -> Result<()> {
    let size = product_size(trial, subset);
    if size > cap {
        return Err(Error::CapExceeded { size, cap });
    }
    if size == 0 {
        return Ok(());
    }
    let trains: Vec<&[f64]> = subset
        .indices()
        .iter()
        .map(|&i| trial.train(i).times())
        .collect();
    let mut idx = vec![0usize; trains.len()];
    let mut tuple: Vec<f64> = trains.iter().map(|t| t[0]).collect();
    loop {
        visit(&tuple)?;
        // odometer increment
        let mut pos = trains.len();
        loop {
            if pos == 0 {
                return Ok(());
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < trains[pos].len() {
                tuple[pos] = trains[pos][idx[pos]];
                break;
            }
            idx[pos] = 0;
            tuple[pos] = trains[pos][0];
        }
    }
}

/// Reference count by full enumeration of the Cartesian product.
pub fn delayed_count_bruteforce(
    trial: &Trial,
    subset: &PatternSubset,
    params: CoincidenceParams,
    cap: u128,
) -> Result<u64> {
    params.check(trial.window())?;
    check_subset(trial, subset)?;
    let c = DelayWindow::new(params.delta);
    let mut count = 0u64;
    for_each_tuple(trial, subset, cap, |xs| {
        count += c.coincides(xs) as u64;
        Ok(())
    })?;
    Ok(count)
}

/// A symmetric `{0,1}`-valued function of an `L`-tuple of spike times.
pub trait CoincidenceFunction {
    fn coincides(&self, xs: &[f64]) -> bool;
}

impl<F> CoincidenceFunction for F
where
    F: Fn(&[f64]) -> bool,
{
    fn coincides(&self, xs: &[f64]) -> bool {
        self(xs)
    }
}

/// `max - min <= delta`.
#[derive(Clone, Copy, Debug)]
pub struct DelayWindow {
    pub delta: f64,
}

impl DelayWindow {
    pub fn new(delta: f64) -> Self {
        Self { delta }
    }
}

impl CoincidenceFunction for DelayWindow {
    fn coincides(&self, xs: &[f64]) -> bool {
        let (lo, hi) = xs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
        hi - lo <= self.delta
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GenericCountOptions {
    pub cap: u128,
    /// Re-evaluate every tuple in reversed and rotated order and fail on any
    /// disagreement.
    pub strict_symmetry: bool,
}

impl Default for GenericCountOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_ENUMERATION_CAP,
            strict_symmetry: false,
        }
    }
}

/// Counts tuples for which `c` holds.
pub fn generic_count<C: CoincidenceFunction + ?Sized>(
    trial: &Trial,
    subset: &PatternSubset,
    c: &C,
    opts: GenericCountOptions,
) -> Result<u64> {
    check_subset(trial, subset)?;
    let mut count = 0u64;
    let mut scratch = Vec::with_capacity(subset.len());
    for_each_tuple(trial, subset, opts.cap, |xs| {
        let hit = c.coincides(xs);
        if opts.strict_symmetry {
            scratch.clear();
            scratch.extend(xs.iter().rev());
            if c.coincides(&scratch) != hit {
                return Err(Error::Asymmetric);
            }
            scratch.rotate_left(1);
            if c.coincides(&scratch) != hit {
                return Err(Error::Asymmetric);
            }
        }
        count += hit as u64;
        Ok(())
    })?;
    Ok(count)
}

/// Clipped binary matrix of one trial: bit `l` of `columns[j]` is set iff
/// neuron `l` fired in bin `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinnedTrial {
    neuron_count: usize,
    bin_width: f64,
    columns: Vec<u64>,
}

impl BinnedTrial {
    pub fn neuron_count(&self) -> usize {
        self.neuron_count
    }

    pub fn bin_count(&self) -> usize {
        self.columns.len()
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn entry(&self, neuron: usize, bin: usize) -> bool {
        self.columns[bin] >> neuron & 1 == 1
    }

    pub fn columns(&self) -> &[u64] {
        &self.columns
    }

    /// Number of occupied bins of `neuron`.
    pub fn occupied(&self, neuron: usize) -> usize {
        self.columns.iter().filter(|c| *c >> neuron & 1 == 1).count()
    }
}

/// Number of whole bins of width `bin_width` that fit in `window`.
pub fn bin_count(window: &Window, bin_width: f64) -> usize {
    // tolerance absorbs representation error in ratios like 0.3 / 0.01
    (window.length() / bin_width * (1.0 + 1e-12)).floor() as usize
}

/// Bins and clips a trial. Bins are anchored at `a`; a trailing partial bin is
/// dropped and the last whole bin is closed on the right.
pub fn bin_trial(trial: &Trial, bin_width: f64) -> Result<BinnedTrial> {
    let window = trial.window();
    if !(bin_width > 0.0 && bin_width < window.length()) {
        return Err(Error::Domain(format!(
            "bin width {bin_width} must lie in (0, {})",
            window.length()
        )));
    }
    let n = trial.neuron_count();
    if n > 64 {
        return Err(Error::Domain(format!("binning supports at most 64 neurons, got {n}")));
    }
    let bins = bin_count(window, bin_width);
    let right_edge = window.a() + bins as f64 * bin_width;
    let mut columns = vec![0u64; bins];
    for (l, train) in trial.trains().iter().enumerate() {
        for &t in train.times() {
            let j = ((t - window.a()) / bin_width).floor() as usize;
            let j = if j >= bins && t <= right_edge { bins - 1 } else { j };
            if j < bins {
                columns[j] |= 1 << l;
            }
        }
    }
    Ok(BinnedTrial {
        neuron_count: n,
        bin_width,
        columns,
    })
}

/// A 0/1 vector over all `n` neurons.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constellation(Vec<bool>);

impl Constellation {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    /// Ones exactly at the neurons of `subset`.
    pub fn from_subset(subset: &PatternSubset, neuron_count: usize) -> Self {
        let mut bits = vec![false; neuron_count];
        for &i in subset.indices() {
            bits[i] = true;
        }
        Self(bits)
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Positions of the ones.
    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    fn mask(&self) -> u64 {
        self.0
            .iter()
            .enumerate()
            .fold(0u64, |m, (i, &b)| if b { m | 1 << i } else { m })
    }
}

/// How a bin column is matched against a constellation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstellationMatch {
    /// Ones where `w` has ones and zeros everywhere else.
    #[default]
    Exact,
    /// Ones where `w` has ones; other neurons unconstrained.
    Marginal,
}

/// Number of bins whose column matches `w`.
pub fn constellation_count(bt: &BinnedTrial, w: &Constellation, mode: ConstellationMatch) -> Result<u64> {
    if w.len() != bt.neuron_count {
        return Err(Error::Domain(format!(
            "constellation has {} entries for {} neurons",
            w.len(),
            bt.neuron_count
        )));
    }
    let mask = w.mask();
    let hits = match mode {
        ConstellationMatch::Exact => bt.columns.iter().filter(|&&c| c == mask).count(),
        ConstellationMatch::Marginal => bt.columns.iter().filter(|&&c| c & mask == mask).count(),
    };
    Ok(hits as u64)
}
