//! Spike trains, trials, trial sets and pattern subsets, with CSV/JSON ingestion.
//!
//! A [`TrialSet`] is always valid once constructed: trains are strictly
//! increasing, every time lies in the shared window, and every trial has the
//! same number of neurons. Files are read into a [`RawTrialSet`] first so that
//! [`validate`] can report every violation at once.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observation window `[a, b]` in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WindowBounds", into = "WindowBounds")]
pub struct Window {
    a: f64,
    b: f64,
}

/// Unchecked window endpoints, as they appear in files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowBounds {
    pub a: f64,
    pub b: f64,
}

impl Window {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if a.is_finite() && b.is_finite() && b > a {
            Ok(Self { a, b })
        } else {
            Err(Error::InvalidWindow { a, b })
        }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// `b - a`.
    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn contains(&self, t: f64) -> bool {
        self.a <= t && t <= self.b
    }
}

impl TryFrom<WindowBounds> for Window {
    type Error = Error;

    fn try_from(w: WindowBounds) -> Result<Self> {
        Window::new(w.a, w.b)
    }
}

impl From<Window> for WindowBounds {
    fn from(w: Window) -> Self {
        WindowBounds { a: w.a, b: w.b }
    }
}

/// Strictly increasing spike times of one neuron.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SpikeTrain(Vec<f64>);

impl SpikeTrain {
    /// Builds a train from times that must already be strictly increasing and
    /// inside `window`.
    pub fn new(times: Vec<f64>, window: &Window) -> Result<Self> {
        let mut violations = Vec::new();
        check_train(&times, window, 0, 0, &mut violations);
        if violations.is_empty() {
            Ok(Self(times))
        } else {
            Err(Error::InvalidTrialSet(violations))
        }
    }

    /// Sorts `times` first, then validates.
    pub fn from_unsorted(mut times: Vec<f64>, window: &Window) -> Result<Self> {
        times.sort_by(f64::total_cmp);
        Self::new(times, window)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn times(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub(crate) fn from_sorted_unchecked(times: Vec<f64>) -> Self {
        debug_assert!(times.windows(2).all(|w| w[0] < w[1]));
        Self(times)
    }
}

/// One trial: `n` trains recorded on a common window.
#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    window: Window,
    trains: Vec<SpikeTrain>,
}

impl Trial {
    pub fn new(window: Window, trains: Vec<SpikeTrain>) -> Result<Self> {
        if trains.is_empty() {
            return Err(Error::InvalidTrialSet(vec![Violation::NoNeurons]));
        }
        let mut violations = Vec::new();
        for (j, train) in trains.iter().enumerate() {
            check_train(train.times(), &window, 0, j, &mut violations);
        }
        if violations.is_empty() {
            Ok(Self { window, trains })
        } else {
            Err(Error::InvalidTrialSet(violations))
        }
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn trains(&self) -> &[SpikeTrain] {
        &self.trains
    }

    pub fn train(&self, neuron: usize) -> &SpikeTrain {
        &self.trains[neuron]
    }

    pub fn neuron_count(&self) -> usize {
        self.trains.len()
    }

    pub(crate) fn from_parts_unchecked(window: Window, trains: Vec<SpikeTrain>) -> Self {
        Self { window, trains }
    }

    /// Same trial with every time (and the window) multiplied by `s > 0`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let window = Window::new(self.window.a * s, self.window.b * s)?;
        let trains = self
            .trains
            .iter()
            .map(|t| SpikeTrain(t.times().iter().map(|x| x * s).collect()))
            .collect();
        Trial::new(window, trains)
    }

    /// Same trial with every time (and the window) shifted by `dt`.
    pub fn shifted(&self, dt: f64) -> Result<Self> {
        let window = Window::new(self.window.a + dt, self.window.b + dt)?;
        let trains = self
            .trains
            .iter()
            .map(|t| SpikeTrain(t.times().iter().map(|x| x + dt).collect()))
            .collect();
        Trial::new(window, trains)
    }
}

/// `M` independent trials of the same `n` neurons on a common window.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialSet {
    window: Window,
    neuron_count: usize,
    trials: Vec<Trial>,
}

impl TrialSet {
    pub fn new(trials: Vec<Trial>) -> Result<Self> {
        let first = trials
            .first()
            .ok_or_else(|| Error::InvalidTrialSet(vec![Violation::NoTrials]))?;
        let window = first.window;
        let neuron_count = first.neuron_count();
        let mut violations = Vec::new();
        for (k, trial) in trials.iter().enumerate() {
            if trial.neuron_count() != neuron_count {
                violations.push(Violation::InconsistentNeuronCount {
                    trial: k,
                    expected: neuron_count,
                    found: trial.neuron_count(),
                });
            }
            if trial.window != window {
                violations.push(Violation::WindowMismatch { trial: k });
            }
        }
        if violations.is_empty() {
            Ok(Self {
                window,
                neuron_count,
                trials,
            })
        } else {
            Err(Error::InvalidTrialSet(violations))
        }
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn neuron_count(&self) -> usize {
        self.neuron_count
    }

    pub fn trial_count(&self) -> usize {
        self.trials.len()
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    /// The first `m` trials as a new set.
    pub fn prefix(&self, m: usize) -> Result<Self> {
        TrialSet::new(self.trials[..m.min(self.trials.len())].to_vec())
    }

    pub fn to_raw(&self) -> RawTrialSet {
        RawTrialSet {
            window: self.window.into(),
            neuron_count: self.neuron_count,
            trials: self
                .trials
                .iter()
                .map(|t| t.trains.iter().map(|s| s.0.clone()).collect())
                .collect(),
            trial_windows: None,
        }
    }
}

impl TryFrom<RawTrialSet> for TrialSet {
    type Error = Error;

    /// Validates, then re-bases per-trial windows (when present) to `[0, b-a]`.
    fn try_from(raw: RawTrialSet) -> Result<Self> {
        validate(&raw).map_err(Error::InvalidTrialSet)?;
        let (window, offsets) = match &raw.trial_windows {
            Some(ws) => {
                let len = raw.window.b - raw.window.a;
                (Window::new(0.0, len)?, ws.iter().map(|w| w.a).collect())
            }
            None => (
                Window::new(raw.window.a, raw.window.b)?,
                vec![0.0; raw.trials.len()],
            ),
        };
        let trials = raw
            .trials
            .into_iter()
            .zip(offsets)
            .map(|(trains, off)| {
                let trains = trains
                    .into_iter()
                    .map(|ts| {
                        // clamp guards rounding at the re-based edges
                        let v = ts
                            .into_iter()
                            .map(|t| (t - off).clamp(window.a, window.b))
                            .collect();
                        SpikeTrain(v)
                    })
                    .collect();
                Trial::from_parts_unchecked(window, trains)
            })
            .collect();
        TrialSet::new(trials)
    }
}

/// Unvalidated trial set; also the JSON file schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawTrialSet {
    pub window: WindowBounds,
    pub neuron_count: usize,
    /// `trials[k][i]` = spike times of neuron `i + 1` in trial `k + 1`.
    pub trials: Vec<Vec<Vec<f64>>>,
    /// Absolute per-trial windows; all must have the length of `window`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial_windows: Option<Vec<WindowBounds>>,
}

/// One invariant violation. Trial and neuron indices are 0-based internally
/// and rendered 1-based.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    InvalidWindow { a: f64, b: f64 },
    NoTrials,
    NoNeurons,
    InconsistentNeuronCount { trial: usize, expected: usize, found: usize },
    NonFinite { trial: usize, neuron: usize },
    NotSorted { trial: usize, neuron: usize },
    DuplicateTime { trial: usize, neuron: usize, time: f64 },
    OutOfWindow { trial: usize, neuron: usize, time: f64 },
    WindowMismatch { trial: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::InvalidWindow { a, b } => write!(f, "invalid window [{a}, {b}]"),
            Violation::NoTrials => write!(f, "no trials"),
            Violation::NoNeurons => write!(f, "no neurons"),
            Violation::InconsistentNeuronCount {
                trial,
                expected,
                found,
            } => write!(
                f,
                "inconsistent neuron count: trial {} has {found}, expected {expected}",
                trial + 1
            ),
            Violation::NonFinite { trial, neuron } => {
                write!(f, "non-finite time at trial {} neuron {}", trial + 1, neuron + 1)
            }
            Violation::NotSorted { trial, neuron } => {
                write!(f, "not sorted at trial {} neuron {}", trial + 1, neuron + 1)
            }
            Violation::DuplicateTime {
                trial,
                neuron,
                time,
            } => write!(
                f,
                "duplicate spike time {time} at trial {} neuron {}",
                trial + 1,
                neuron + 1
            ),
            Violation::OutOfWindow {
                trial,
                neuron,
                time,
            } => write!(
                f,
                "time outside window: {time} at trial {} neuron {}",
                trial + 1,
                neuron + 1
            ),
            Violation::WindowMismatch { trial } => {
                write!(f, "window length mismatch at trial {}", trial + 1)
            }
        }
    }
}

fn check_train(
    times: &[f64],
    window: &Window,
    trial: usize,
    neuron: usize,
    out: &mut Vec<Violation>,
) {
    if times.iter().any(|t| !t.is_finite()) {
        out.push(Violation::NonFinite { trial, neuron });
        return;
    }
    let mut sorted = true;
    for w in times.windows(2) {
        if w[1] == w[0] {
            out.push(Violation::DuplicateTime {
                trial,
                neuron,
                time: w[0],
            });
        } else if w[1] < w[0] {
            sorted = false;
        }
    }
    if !sorted {
        out.push(Violation::NotSorted { trial, neuron });
    }
    if let Some(&t) = times.iter().find(|&&t| !window.contains(t)) {
        out.push(Violation::OutOfWindow {
            trial,
            neuron,
            time: t,
        });
    }
}

/// Reports every invariant violation of `raw`; `Ok(())` iff there are none.
pub fn validate(raw: &RawTrialSet) -> std::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let Ok(window) = Window::new(raw.window.a, raw.window.b) else {
        return Err(vec![Violation::InvalidWindow {
            a: raw.window.a,
            b: raw.window.b,
        }]);
    };
    if raw.trials.is_empty() {
        out.push(Violation::NoTrials);
    }
    if raw.neuron_count == 0 {
        out.push(Violation::NoNeurons);
    }
    if let Some(ws) = &raw.trial_windows {
        if ws.len() != raw.trials.len() {
            out.push(Violation::WindowMismatch {
                trial: ws.len().min(raw.trials.len()),
            });
        }
    }
    for (k, trains) in raw.trials.iter().enumerate() {
        if trains.len() != raw.neuron_count {
            out.push(Violation::InconsistentNeuronCount {
                trial: k,
                expected: raw.neuron_count,
                found: trains.len(),
            });
        }
        let trial_window = match raw.trial_windows.as_ref().and_then(|ws| ws.get(k)) {
            Some(w) => match Window::new(w.a, w.b) {
                Ok(tw) if (tw.length() - window.length()).abs() <= 1e-9 * window.length() => tw,
                Ok(_) => {
                    out.push(Violation::WindowMismatch { trial: k });
                    continue;
                }
                Err(_) => {
                    out.push(Violation::InvalidWindow { a: w.a, b: w.b });
                    continue;
                }
            },
            None => window,
        };
        for (i, times) in trains.iter().enumerate() {
            check_train(times, &trial_window, k, i, &mut out);
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// A subset of neuron indices with at least two members, stored 0-based and
/// sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "Vec<usize>", try_from = "Vec<usize>")]
pub struct PatternSubset(Vec<usize>);

impl PatternSubset {
    /// From 0-based indices; `neuron_count` bounds them.
    pub fn new(mut indices: Vec<usize>, neuron_count: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.len() < 2 {
            return Err(Error::InvalidPattern(format!(
                "need at least two distinct neurons, got {}",
                indices.len()
            )));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= neuron_count) {
            return Err(Error::InvalidPattern(format!(
                "neuron {} out of range 1..={neuron_count}",
                bad + 1
            )));
        }
        Ok(Self(indices))
    }

    /// From 1-based neuron ids, as used on the command line and in reports.
    pub fn from_one_based(ids: &[usize], neuron_count: usize) -> Result<Self> {
        if ids.contains(&0) {
            return Err(Error::InvalidPattern("neuron ids are 1-based".into()));
        }
        Self::new(ids.iter().map(|i| i - 1).collect(), neuron_count)
    }

    /// Parses `"1,3,4"`.
    pub fn parse(s: &str, neuron_count: usize) -> Result<Self> {
        let ids = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::InvalidPattern(format!("{p:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_one_based(&ids, neuron_count)
    }

    /// Every subset of `{0..n}` with at least two members, ordered by size
    /// then lexicographically.
    pub fn all(neuron_count: usize) -> Vec<Self> {
        use itertools::Itertools;
        (2..=neuron_count)
            .flat_map(|size| (0..neuron_count).combinations(size))
            .map(PatternSubset)
            .collect()
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|i| i + 1).collect()
    }
}

impl From<PatternSubset> for Vec<usize> {
    fn from(p: PatternSubset) -> Self {
        p.one_based()
    }
}

impl TryFrom<Vec<usize>> for PatternSubset {
    type Error = Error;

    fn try_from(ids: Vec<usize>) -> Result<Self> {
        let n = ids.iter().copied().max().unwrap_or(0);
        Self::from_one_based(&ids, n)
    }
}

impl fmt::Display for PatternSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (j, i) in self.0.iter().enumerate() {
            if j > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        write!(f, "}}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// `.json` means JSON, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

/// CSV header carried either in leading `#` comment lines or a sidecar JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvHeader {
    pub window_a: f64,
    pub window_b: f64,
    pub neurons: usize,
    pub trials: usize,
}

/// Path of the optional sidecar header for a CSV file: `data.csv` → `data.header.json`.
pub fn sidecar_header_path(path: &Path) -> PathBuf {
    path.with_extension("header.json")
}

pub fn load_trial_set(path: &Path, format: Format) -> Result<TrialSet> {
    let text = fs::read_to_string(path)?;
    let raw = match format {
        Format::Json => serde_json::from_str::<RawTrialSet>(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?,
        Format::Csv => {
            let sidecar = sidecar_header_path(path);
            let header = if sidecar.exists() {
                Some(
                    serde_json::from_str::<CsvHeader>(&fs::read_to_string(&sidecar)?)
                        .map_err(|e| Error::Parse(format!("{}: {e}", sidecar.display())))?,
                )
            } else {
                None
            };
            parse_csv(&text, header)?
        }
    };
    TrialSet::try_from(raw)
}

fn parse_header_comment(line: &str, header: &mut PartialHeader) -> Result<()> {
    for token in line.trim_start_matches('#').split_whitespace() {
        let Some((key, value)) = token.split_once('=') else {
            continue;
        };
        let bad = |e: &dyn fmt::Display| Error::Parse(format!("header {key}: {e}"));
        match key {
            "window_a" => header.window_a = Some(value.parse().map_err(|e| bad(&e))?),
            "window_b" => header.window_b = Some(value.parse().map_err(|e| bad(&e))?),
            "neurons" => header.neurons = Some(value.parse().map_err(|e| bad(&e))?),
            "trials" => header.trials = Some(value.parse().map_err(|e| bad(&e))?),
            _ => {}
        }
    }
    Ok(())
}

#[derive(Default)]
struct PartialHeader {
    window_a: Option<f64>,
    window_b: Option<f64>,
    neurons: Option<usize>,
    trials: Option<usize>,
}

/// Parses the CSV body. `sidecar` wins over comment lines when both exist.
pub fn parse_csv(text: &str, sidecar: Option<CsvHeader>) -> Result<RawTrialSet> {
    let mut partial = PartialHeader::default();
    let mut body = String::with_capacity(text.len());
    for line in text.lines() {
        if line.trim_start().starts_with('#') {
            parse_header_comment(line, &mut partial)?;
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    let header = match sidecar {
        Some(h) => h,
        None => CsvHeader {
            window_a: partial
                .window_a
                .ok_or_else(|| Error::Parse("missing window_a in header".into()))?,
            window_b: partial
                .window_b
                .ok_or_else(|| Error::Parse("missing window_b in header".into()))?,
            neurons: partial
                .neurons
                .ok_or_else(|| Error::Parse("missing neurons in header".into()))?,
            trials: partial
                .trials
                .ok_or_else(|| Error::Parse("missing trials in header".into()))?,
        },
    };

    #[derive(Deserialize)]
    struct Row {
        trial_id: usize,
        neuron_id: usize,
        spike_time: f64,
    }

    let mut trials = vec![vec![Vec::new(); header.neurons]; header.trials];
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    for (line, row) in reader.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::Parse(format!("row {}: {e}", line + 1)))?;
        if row.trial_id == 0 || row.trial_id > header.trials {
            return Err(Error::Parse(format!(
                "row {}: trial_id {} outside 1..={}",
                line + 1,
                row.trial_id,
                header.trials
            )));
        }
        if row.neuron_id == 0 || row.neuron_id > header.neurons {
            return Err(Error::Parse(format!(
                "row {}: neuron_id {} outside 1..={}",
                line + 1,
                row.neuron_id,
                header.neurons
            )));
        }
        trials[row.trial_id - 1][row.neuron_id - 1].push(row.spike_time);
    }
    for trains in &mut trials {
        for times in trains.iter_mut() {
            times.sort_by(f64::total_cmp);
        }
    }
    Ok(RawTrialSet {
        window: WindowBounds {
            a: header.window_a,
            b: header.window_b,
        },
        neuron_count: header.neurons,
        trials,
        trial_windows: None,
    })
}

/// Renders the CSV form with the header in a leading comment line. Floats use
/// shortest round-trip formatting, so reading back is exact.
pub fn to_csv_string(ts: &TrialSet) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "# window_a={} window_b={} neurons={} trials={}\n",
        ts.window.a,
        ts.window.b,
        ts.neuron_count,
        ts.trial_count()
    ));
    out.push_str("trial_id,neuron_id,spike_time\n");
    for (k, trial) in ts.trials.iter().enumerate() {
        for (i, train) in trial.trains.iter().enumerate() {
            for t in train.times() {
                out.push_str(&format!("{},{},{}\n", k + 1, i + 1, t));
            }
        }
    }
    out
}

pub fn write_trial_set(ts: &TrialSet, path: &Path, format: Format) -> Result<()> {
    let mut file = fs::File::create(path)?;
    match format {
        Format::Csv => file.write_all(to_csv_string(ts).as_bytes())?,
        Format::Json => {
            let text = serde_json::to_string(&ts.to_raw())
                .map_err(|e| Error::Parse(e.to_string()))?;
            file.write_all(text.as_bytes())?;
            file.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Groups the spike counts per neuron over all trials (used for rate estimates).
pub fn total_counts(ts: &TrialSet) -> Vec<usize> {
    let mut counts = vec![0usize; ts.neuron_count];
    for trial in &ts.trials {
        for (c, train) in counts.iter_mut().zip(&trial.trains) {
            *c += train.len();
        }
    }
    counts
}

/// Builds a `TrialSet` directly from nested vectors (tests and examples).
pub fn trial_set_from_vecs(window: Window, trials: Vec<Vec<Vec<f64>>>) -> Result<TrialSet> {
    let neuron_count = trials.first().map_or(0, Vec::len);
    TrialSet::try_from(RawTrialSet {
        window: window.into(),
        neuron_count,
        trials,
        trial_windows: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(trials: Vec<Vec<Vec<f64>>>, n: usize) -> RawTrialSet {
        RawTrialSet {
            window: WindowBounds { a: 0.0, b: 1.0 },
            neuron_count: n,
            trials,
            trial_windows: None,
        }
    }

    #[test]
    fn valid_set_passes() {
        let r = raw(vec![vec![vec![0.1, 0.2], vec![]]], 2);
        assert!(validate(&r).is_ok());
    }

    #[test]
    fn unsorted_train_is_reported() {
        let r = raw(vec![vec![vec![0.2, 0.1], vec![]]], 2);
        let v = validate(&r).unwrap_err();
        assert_eq!(v, vec![Violation::NotSorted { trial: 0, neuron: 0 }]);
        assert!(v[0].to_string().contains("not sorted"));
    }

    #[test]
    fn inconsistent_neuron_count_is_reported() {
        let mut trials = vec![vec![vec![]; 5]; 4];
        trials[2] = vec![vec![]; 4];
        let v = validate(&raw(trials, 5)).unwrap_err();
        assert_eq!(
            v,
            vec![Violation::InconsistentNeuronCount {
                trial: 2,
                expected: 5,
                found: 4
            }]
        );
        assert!(v[0].to_string().contains("inconsistent neuron count"));
    }

    #[test]
    fn every_violation_is_listed() {
        let r = raw(vec![vec![vec![0.3, 0.3, 1.5], vec![0.5, 0.4]]], 2);
        let v = validate(&r).unwrap_err();
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn empty_spike_file_gives_empty_trains() {
        let text = "# window_a=0 window_b=0.5 neurons=3 trials=2\ntrial_id,neuron_id,spike_time\n";
        let ts = TrialSet::try_from(parse_csv(text, None).unwrap()).unwrap();
        assert_eq!(ts.trial_count(), 2);
        assert_eq!(ts.neuron_count(), 3);
        assert!(ts.trials().iter().all(|t| t.trains().iter().all(|s| s.is_empty())));
    }

    #[test]
    fn time_beyond_window_is_rejected() {
        let text = "# window_a=0 window_b=0.5 neurons=1 trials=1\ntrial_id,neuron_id,spike_time\n1,1,0.7\n";
        let err = TrialSet::try_from(parse_csv(text, None).unwrap()).unwrap_err();
        assert!(err.to_string().contains("time outside window"), "{err}");
    }

    #[test]
    fn duplicate_rows_are_rejected() {
        let text = "# window_a=0 window_b=1 neurons=1 trials=1\ntrial_id,neuron_id,spike_time\n1,1,0.25\n1,1,0.25\n";
        let err = TrialSet::try_from(parse_csv(text, None).unwrap()).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn csv_rows_are_sorted_on_load() {
        let text = "# window_a=0 window_b=1 neurons=1 trials=1\ntrial_id,neuron_id,spike_time\n1,1,0.5\n1,1,0.25\n";
        let ts = TrialSet::try_from(parse_csv(text, None).unwrap()).unwrap();
        assert_eq!(ts.trials()[0].train(0).times(), &[0.25, 0.5]);
    }

    #[test]
    fn missing_header_is_a_parse_error() {
        let err = parse_csv("trial_id,neuron_id,spike_time\n1,1,0.1\n", None).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn per_trial_windows_are_rebased() {
        let mut r = raw(vec![vec![vec![10.1]], vec![vec![20.4]]], 1);
        r.window = WindowBounds { a: 10.0, b: 10.5 };
        r.trial_windows = Some(vec![
            WindowBounds { a: 10.0, b: 10.5 },
            WindowBounds { a: 20.0, b: 20.5 },
        ]);
        let ts = TrialSet::try_from(r).unwrap();
        assert_eq!(ts.window().a(), 0.0);
        assert!((ts.trials()[0].train(0).times()[0] - 0.1).abs() < 1e-12);
        assert!((ts.trials()[1].train(0).times()[0] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn per_trial_window_length_mismatch_is_reported() {
        let mut r = raw(vec![vec![vec![]], vec![vec![]]], 1);
        r.trial_windows = Some(vec![
            WindowBounds { a: 0.0, b: 1.0 },
            WindowBounds { a: 5.0, b: 5.5 },
        ]);
        assert_eq!(
            validate(&r).unwrap_err(),
            vec![Violation::WindowMismatch { trial: 1 }]
        );
    }

    #[test]
    fn pattern_parsing() {
        let p = PatternSubset::parse("4, 1,3", 4).unwrap();
        assert_eq!(p.indices(), &[0, 2, 3]);
        assert_eq!(p.to_string(), "{1,3,4}");
        assert!(PatternSubset::parse("1", 4).is_err());
        assert!(PatternSubset::parse("1,5", 4).is_err());
        assert!(PatternSubset::parse("0,1", 4).is_err());
    }

    #[test]
    fn all_patterns_of_four_neurons() {
        let all = PatternSubset::all(4);
        assert_eq!(all.len(), 11);
        assert_eq!(all[0].indices(), &[0, 1]);
        assert_eq!(all[10].indices(), &[0, 1, 2, 3]);
    }

    #[test]
    fn window_rejects_empty_interval() {
        assert!(Window::new(1.0, 1.0).is_err());
        assert!(Window::new(0.0, f64::NAN).is_err());
    }
}
