//! Monte-Carlo evaluation: repeated draws from a simulation framework, tests
//! at several trial counts, and the curves summarising them (KS distances,
//! sorted p-values, rejection rates, per-pattern detection frequencies).
//!
//! Repetition `r` draws its parameters and trials from substreams keyed by
//! `(seed, r, ·)`; the trial set for the largest `M` is simulated once and
//! smaller `M` use its prefixes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::independence::{multi_pattern_test, run_test, Method, TestSettings, DEFAULT_PATTERN_NEURON_CAP};
use crate::simulate::{sample_parameters, simulate_trials, FrameworkConfig, SampledParameters, DEFAULT_DELTA};
use crate::spike_data::PatternSubset;
pub use crate::stats::{ks_distance, Reference};

pub const DEFAULT_REPETITIONS: usize = 1000;

pub fn default_m_grid() -> Vec<usize> {
    (1..=10).map(|i| 10 * i).collect()
}

/// Parses `start:stop:step` (inclusive) or a comma list.
pub fn parse_m_grid(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Parse(format!("bad trial-count grid {s:?}"));
    let grid: Vec<usize> = if s.contains(':') {
        let parts: Vec<usize> = s
            .split(':')
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [start, stop, step] = parts[..] else {
            return Err(bad());
        };
        if step == 0 || start > stop {
            return Err(bad());
        }
        (start..=stop).step_by(step).collect()
    } else {
        s.split(',')
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    Ok(grid)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    /// `cfg.trials` is ignored; trial counts come from `m_grid`.
    pub cfg: FrameworkConfig,
    pub repetitions: usize,
    pub m_grid: Vec<usize>,
    pub methods: Vec<Method>,
    pub alphas: Vec<f64>,
    pub delta: f64,
    pub bin_width: Option<f64>,
    /// Tested pattern; `None` means all neurons.
    pub pattern: Option<PatternSubset>,
}

impl EvalRun {
    pub fn new(cfg: FrameworkConfig) -> Self {
        Self {
            cfg,
            repetitions: DEFAULT_REPETITIONS,
            m_grid: default_m_grid(),
            methods: vec![Method::Gaue, Method::Ue],
            alphas: vec![0.05],
            delta: DEFAULT_DELTA,
            bin_width: None,
            pattern: None,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Domain("need at least one repetition".into()));
        }
        if self.m_grid.is_empty() || self.m_grid[0] == 0 || self.m_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("trial-count grid must be nonempty, positive and ascending".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Domain("no test method selected".into()));
        }
        if self.alphas.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::Domain("levels must lie in (0, 1)".into()));
        }
        let mut cfg = self.cfg.clone();
        cfg.trials = self.max_trials();
        cfg.check()
    }

    pub fn max_trials(&self) -> usize {
        self.m_grid.last().copied().unwrap_or(0)
    }

    fn pattern(&self) -> Result<PatternSubset> {
        match &self.pattern {
            Some(p) => Ok(p.clone()),
            None => PatternSubset::new((0..self.cfg.neuron_count).collect(), self.cfg.neuron_count),
        }
    }

    fn settings(&self, method: Method) -> TestSettings {
        TestSettings {
            method,
            delta: self.delta,
            bin_width: self.bin_width,
        }
    }
}

/// Result of one test in one repetition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TestRecord {
    Done { statistic: f64, p_value: f64, excess: f64 },
    Failed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRecord {
    pub repetition: u64,
    pub params: SampledParameters,
    /// `records[m][k]`: trial count `m_grid[m]`, method `methods[k]`.
    pub records: Vec<Vec<TestRecord>>,
}

fn run_repetition(run: &EvalRun, pattern: &PatternSubset, repetition: u64) -> RepetitionRecord {
    let params = sample_parameters(&run.cfg, repetition);
    let full = simulate_trials(
        &params,
        run.max_trials(),
        run.cfg.seed,
        repetition,
        run.cfg.hawkes,
        Execution::Sequential,
    );
    let records = run
        .m_grid
        .iter()
        .map(|&m| {
            run.methods
                .iter()
                .map(|&method| {
                    let outcome = full
                        .as_ref()
                        .map_err(|e| Error::Domain(e.to_string()))
                        .and_then(|ts| ts.prefix(m))
                        .and_then(|ts| run_test(&ts, pattern, &run.settings(method), 0.5));
                    match outcome {
                        Ok(o) => TestRecord::Done {
                            statistic: o.statistic,
                            p_value: o.p_value,
                            excess: o.excess,
                        },
                        Err(e) => TestRecord::Failed(e.to_string()),
                    }
                })
                .collect()
        })
        .collect();
    RepetitionRecord {
        repetition,
        params,
        records,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    KsVsM,
    SortedPvalues,
    RateVsM,
    DetectionHistogram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveData {
    pub id: String,
    pub label: String,
    pub kind: CurveKind,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl CurveData {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y\n");
        for (x, y) in self.x.iter().zip(&self.y) {
            out.push_str(&format!("{x},{y}\n"));
        }
        out
    }
}

/// Aggregates for one method at one trial count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: Method,
    pub trials: usize,
    pub completed: usize,
    pub failed: usize,
    /// `None` when no repetition completed.
    pub ks_statistic: Option<f64>,
    pub ks_pvalue: Option<f64>,
    /// Rejections over all repetitions (failures count as acceptances), per level.
    pub rejection_rate: Vec<f64>,
    /// Share of rejections at the first level whose excess is positive.
    pub excitatory_share: Option<f64>,
    pub sorted_pvalues: Vec<f64>,
    pub statistics: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run: EvalRun,
    pub repetitions_done: usize,
    pub cells: Vec<CellSummary>,
    /// First few failure messages, for diagnosis.
    pub failure_samples: Vec<String>,
}

impl EvalReport {
    pub fn cell(&self, method: Method, trials: usize) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.method == method && c.trials == trials)
    }

    pub fn curves(&self) -> Vec<CurveData> {
        let mut curves = Vec::new();
        for &method in &self.run.methods {
            let cells: Vec<&CellSummary> = self.cells.iter().filter(|c| c.method == method).collect();
            let ks = |f: fn(&CellSummary) -> Option<f64>| {
                cells
                    .iter()
                    .filter_map(|c| f(c).map(|v| (c.trials as f64, v)))
                    .unzip::<f64, f64, Vec<_>, Vec<_>>()
            };
            let (x, y) = ks(|c| c.ks_statistic);
            curves.push(CurveData {
                id: format!("{method}_ks_statistic"),
                label: format!("{method}: KS(statistics, N(0,1)) vs M"),
                kind: CurveKind::KsVsM,
                x,
                y,
            });
            let (x, y) = ks(|c| c.ks_pvalue);
            curves.push(CurveData {
                id: format!("{method}_ks_pvalue"),
                label: format!("{method}: KS(p-values, U[0,1]) vs M"),
                kind: CurveKind::KsVsM,
                x,
                y,
            });
            for (i, alpha) in self.run.alphas.iter().enumerate() {
                curves.push(CurveData {
                    id: format!("{method}_rate_alpha{alpha}"),
                    label: format!("{method}: rejection rate at level {alpha} vs M"),
                    kind: CurveKind::RateVsM,
                    x: cells.iter().map(|c| c.trials as f64).collect(),
                    y: cells.iter().map(|c| c.rejection_rate[i]).collect(),
                });
            }
            for c in &cells {
                let n = c.sorted_pvalues.len();
                curves.push(CurveData {
                    id: format!("{method}_sorted_p_M{}", c.trials),
                    label: format!("{method}: sorted p-values, M = {}", c.trials),
                    kind: CurveKind::SortedPvalues,
                    x: (1..=n).map(|i| i as f64 / n as f64).collect(),
                    y: c.sorted_pvalues.clone(),
                });
            }
        }
        curves
    }
}

/// `sup_u |Q(u) - u|` for the step quantile function with `Q(u) = y_i` on
/// `((i-1)/n, i/n]`; equals the KS distance of the sample to `U[0,1]`.
pub fn sorted_curve_deviation(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &y)| (y - i as f64 / n).abs().max((y - (i + 1) as f64 / n).abs()))
        .fold(0.0, f64::max)
}

fn summarize(run: &EvalRun, reps: &[RepetitionRecord]) -> (Vec<CellSummary>, Vec<String>) {
    let mut cells = Vec::new();
    let mut failure_samples = Vec::new();
    for (mi, &m) in run.m_grid.iter().enumerate() {
        for (ki, &method) in run.methods.iter().enumerate() {
            let mut statistics = Vec::new();
            let mut pvalues = Vec::new();
            let mut rejections = vec![0usize; run.alphas.len()];
            let mut excitatory = 0usize;
            let mut failed = 0;
            for rep in reps {
                match &rep.records[mi][ki] {
                    TestRecord::Done {
                        statistic,
                        p_value,
                        excess,
                    } => {
                        if statistic.is_finite() {
                            statistics.push(*statistic);
                        }
                        pvalues.push(*p_value);
                        for (j, &a) in run.alphas.iter().enumerate() {
                            if *p_value <= a {
                                rejections[j] += 1;
                                if j == 0 && *excess > 0.0 {
                                    excitatory += 1;
                                }
                            }
                        }
                    }
                    TestRecord::Failed(msg) => {
                        failed += 1;
                        if failure_samples.len() < 10 {
                            failure_samples.push(format!(
                                "repetition {}, M = {m}, {method}: {msg}",
                                rep.repetition
                            ));
                        }
                    }
                }
            }
            pvalues.sort_by(f64::total_cmp);
            let total = reps.len().max(1) as f64;
            cells.push(CellSummary {
                method,
                trials: m,
                completed: pvalues.len(),
                failed,
                ks_statistic: ks_distance(&statistics, Reference::StdNormal).ok(),
                ks_pvalue: ks_distance(&pvalues, Reference::Uniform01).ok(),
                rejection_rate: rejections.iter().map(|&r| r as f64 / total).collect(),
                excitatory_share: rejections
                    .first()
                    .filter(|&&r| r > 0)
                    .map(|&r| excitatory as f64 / r as f64),
                sorted_pvalues: pvalues,
                statistics,
            });
        }
    }
    (cells, failure_samples)
}

/// Runs procedure P, calling `on_batch` with the aggregate after every batch
/// of repetitions. Results do not depend on the batch size or execution.
pub fn run_procedure_p_batched(
    run: &EvalRun,
    exec: Execution,
    batch_size: usize,
    mut on_batch: impl FnMut(&EvalReport) -> Result<()>,
) -> Result<EvalReport> {
    run.check()?;
    let pattern = run.pattern()?;
    if pattern.indices().iter().any(|&i| i >= run.cfg.neuron_count) {
        return Err(Error::InvalidPattern(format!(
            "pattern {pattern} exceeds {} neurons",
            run.cfg.neuron_count
        )));
    }
    let batch_size = batch_size.max(1);
    let mut reps: Vec<RepetitionRecord> = Vec::with_capacity(run.repetitions);
    let mut report = None;
    while reps.len() < run.repetitions {
        let start = reps.len();
        let len = batch_size.min(run.repetitions - start);
        reps.extend(exec.map_indices(len, |i| run_repetition(run, &pattern, (start + i) as u64)));
        let (cells, failure_samples) = summarize(run, &reps);
        let r = EvalReport {
            run: run.clone(),
            repetitions_done: reps.len(),
            cells,
            failure_samples,
        };
        on_batch(&r)?;
        report = Some(r);
    }
    Ok(report.expect("at least one repetition"))
}

pub fn run_procedure_p(run: &EvalRun, exec: Execution) -> Result<EvalReport> {
    run_procedure_p_batched(run, exec, run.repetitions, |_| Ok(()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanCell {
    pub rate: f64,
    pub duration: f64,
    pub report: EvalReport,
}

impl ScanCell {
    /// Curves with ids prefixed by the cell coordinates.
    pub fn curves(&self) -> Vec<CurveData> {
        self.report
            .curves()
            .into_iter()
            .map(|mut c| {
                c.id = format!("lambda{}_b{}_{}", self.rate, self.duration, c.id);
                c.label = format!("lambda = {} Hz, b = {} s; {}", self.rate, self.duration, c.label);
                c
            })
            .collect()
    }
}

pub fn default_rate_grid() -> Vec<f64> {
    vec![8.0, 15.0, 20.0]
}

pub fn default_duration_grid() -> Vec<f64> {
    vec![0.2, 0.3, 0.4]
}

/// Procedure P on every `(rate, duration)` cell, both fixed for all neurons.
pub fn parameter_scan(
    base: &EvalRun,
    rate_grid: &[f64],
    duration_grid: &[f64],
    exec: Execution,
) -> Result<Vec<ScanCell>> {
    if rate_grid.is_empty() || duration_grid.is_empty() {
        return Err(Error::Domain("scan grids must be nonempty".into()));
    }
    let mut cells = Vec::new();
    for &rate in rate_grid {
        for &duration in duration_grid {
            let mut run = base.clone();
            run.cfg.overrides.rate = Some(rate);
            run.cfg.overrides.duration = Some(duration);
            let report = run_procedure_p(&run, exec)?;
            cells.push(ScanCell { rate, duration, report });
        }
    }
    Ok(cells)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodDetections {
    pub method: Method,
    /// Share of repetitions in which each pattern was rejected.
    pub frequencies: Vec<f64>,
    /// Repetitions whose simulation or test failed outright.
    pub failed: usize,
    /// Per pattern, repetitions where the test was degenerate (p = 1).
    pub flagged: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionHistogram {
    pub cfg: FrameworkConfig,
    pub q: f64,
    pub repetitions: usize,
    pub patterns: Vec<PatternSubset>,
    pub methods: Vec<MethodDetections>,
}

impl DetectionHistogram {
    pub fn frequency(&self, method: Method, pattern: &PatternSubset) -> Option<f64> {
        let i = self.patterns.iter().position(|p| p == pattern)?;
        let m = self.methods.iter().find(|m| m.method == method)?;
        Some(m.frequencies[i])
    }

    /// One curve per method: `x` is the 1-based pattern index in `patterns`.
    pub fn curves(&self) -> Vec<CurveData> {
        self.methods
            .iter()
            .map(|m| CurveData {
                id: format!("{}_detections", m.method),
                label: format!(
                    "{}: detection frequency per pattern ({})",
                    m.method,
                    self.patterns.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(" ")
                ),
                kind: CurveKind::DetectionHistogram,
                x: (1..=self.patterns.len()).map(|i| i as f64).collect(),
                y: m.frequencies.clone(),
            })
            .collect()
    }
}

/// Multi-pattern testing with Benjamini–Hochberg at level `q` in each of
/// `repetitions` draws of `cfg` (with `cfg.trials` trials).
pub fn detection_histogram(
    cfg: &FrameworkConfig,
    q: f64,
    repetitions: usize,
    methods: &[Method],
    delta: f64,
    exec: Execution,
) -> Result<DetectionHistogram> {
    cfg.check()?;
    if repetitions == 0 {
        return Err(Error::Domain("need at least one repetition".into()));
    }
    let patterns: Vec<PatternSubset> = PatternSubset::all(cfg.neuron_count)
        .into_iter()
        .filter(|p| p.len() >= 2)
        .collect();
    let per_rep: Vec<Vec<Option<(Vec<bool>, Vec<bool>)>>> = exec.map_indices(repetitions, |r| {
        let params = sample_parameters(cfg, r as u64);
        let ts = simulate_trials(&params, cfg.trials, cfg.seed, r as u64, cfg.hawkes, Execution::Sequential);
        methods
            .iter()
            .map(|&method| {
                let ts = ts.as_ref().ok()?;
                let report = multi_pattern_test(
                    ts,
                    &TestSettings::new(method, delta),
                    q,
                    DEFAULT_PATTERN_NEURON_CAP,
                    Execution::Sequential,
                )
                .ok()?;
                Some((
                    report.patterns.iter().map(|p| p.reject).collect(),
                    report.patterns.iter().map(|p| !p.flags.is_empty()).collect(),
                ))
            })
            .collect()
    });
    let methods = methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let mut hits = vec![0usize; patterns.len()];
            let mut flagged = vec![0usize; patterns.len()];
            let mut failed = 0;
            for rep in &per_rep {
                match &rep[k] {
                    Some((rejects, flags)) => {
                        for i in 0..patterns.len() {
                            hits[i] += rejects[i] as usize;
                            flagged[i] += flags[i] as usize;
                        }
                    }
                    None => failed += 1,
                }
            }
            MethodDetections {
                method,
                frequencies: hits.iter().map(|&h| h as f64 / repetitions as f64).collect(),
                failed,
                flagged,
            }
        })
        .collect();
    Ok(DetectionHistogram {
        cfg: cfg.clone(),
        q,
        repetitions,
        patterns,
        methods,
    })
}

/// Contents of `meta.json`; no timestamps, so reruns are byte-identical.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Meta<C> {
    pub experiment: String,
    pub library_version: String,
    pub seed: u64,
    pub config: C,
    pub curves: Vec<CurveMeta>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveMeta {
    pub id: String,
    pub label: String,
    pub kind: CurveKind,
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Writes `<root>/<experiment>/<curve-id>.csv` for each curve plus `meta.json`.
/// Each file is replaced atomically, so an interrupted run leaves valid files.
pub fn write_curves<C: Serialize>(
    root: &Path,
    experiment: &str,
    seed: u64,
    config: &C,
    curves: &[CurveData],
    extra: Option<serde_json::Value>,
) -> Result<PathBuf> {
    let dir = root.join(experiment);
    fs::create_dir_all(&dir)?;
    for c in curves {
        write_atomic(&dir.join(format!("{}.csv", c.id)), c.to_csv().as_bytes())?;
    }
    let meta = Meta {
        experiment: experiment.to_string(),
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        config,
        curves: curves
            .iter()
            .map(|c| CurveMeta {
                id: c.id.clone(),
                label: c.label.clone(),
                kind: c.kind,
            })
            .collect(),
    };
    let mut value = serde_json::to_value(&meta).map_err(|e| Error::Parse(e.to_string()))?;
    if let (Some(extra), Some(obj)) = (extra, value.as_object_mut()) {
        obj.insert("results".into(), extra);
    }
    let text = serde_json::to_string_pretty(&value).map_err(|e| Error::Parse(e.to_string()))?;
    write_atomic(&dir.join("meta.json"), text.as_bytes())?;
    Ok(dir)
}

/// Reads a curve CSV written by [`write_curves`].
pub fn read_curve_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?;
    if headers != vec!["x", "y"] {
        return Err(Error::Parse(format!("unexpected header {headers:?}")));
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for row in rdr.deserialize::<(f64, f64)>() {
        let (a, b) = row.map_err(|e| Error::Parse(e.to_string()))?;
        x.push(a);
        y.push(b);
    }
    Ok((x, y))
}
