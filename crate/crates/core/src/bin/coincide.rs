//! `coincide`: independence tests on multi-neuron spike trains, simulation of
//! the benchmark frameworks, and Monte-Carlo evaluation curves.
//!
//! Results go to stdout as JSON (a table with `--pretty`); errors go to stderr
//! as `{"error": {"kind": ..., "message": ...}}`. Exit codes: 0 success,
//! 1 usage or I/O error, 2 statistical degeneracy.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use coincide::exec::{configure_threads, Execution};
use coincide::harness::{
    default_duration_grid, default_m_grid, default_rate_grid, detection_histogram, parameter_scan,
    parse_m_grid, run_procedure_p_batched, write_curves, CurveData, EvalRun, ScanCell, DEFAULT_REPETITIONS,
};
use coincide::independence::{
    gaue_compute, gaue_outcome, multi_pattern_test, run_test, Method, MultiPatternReport, TestOutcome,
    TestSettings, DEFAULT_PATTERN_NEURON_CAP,
};
use coincide::simulate::{sample_framework, Framework, FrameworkConfig, Overrides, DEFAULT_DELTA};
use coincide::spike_data::{load_trial_set, write_trial_set, Format, PatternSubset, TrialSet};
use coincide::Error;

#[derive(Parser, Debug)]
#[command(name = "coincide", version, about = "Delayed-coincidence independence tests for spike trains")]
struct Cli {
    /// Worker threads for parallel work (default: all cores).
    #[arg(long, global = true, env = "COINCIDE_THREADS")]
    threads: Option<usize>,

    /// Print a human-readable table instead of JSON.
    #[arg(long, global = true)]
    pretty: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Test a pattern (or every pattern with --multi) in a trial-set file.
    Test(TestArgs),
    /// Simulate a trial set from one of the frameworks F1..F4.
    Simulate(SimulateArgs),
    /// Run the Monte-Carlo procedure and write evaluation curves.
    Evaluate(EvaluateArgs),
    /// Run the evaluation over a grid of fixed rates and durations.
    Scan(ScanArgs),
    /// Per-pattern detection frequencies of the multi-pattern test.
    Histogram(HistogramArgs),
}

#[derive(Args, Debug)]
struct TestArgs {
    /// Trial-set file (.csv or .json).
    input: PathBuf,
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_parser = parse_format)]
    format: Option<Format>,
    /// 1-based neuron ids, e.g. 1,3,4 (default: all neurons).
    #[arg(long)]
    pattern: Option<String>,
    /// Coincidence delay in seconds.
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    /// Test level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Test method: gaue or ue.
    #[arg(long, default_value = "gaue", value_parser = parse_method)]
    method: Method,
    /// UE bin width in seconds (default: 2 delta).
    #[arg(long)]
    bin_width: Option<f64>,
    /// Test every pattern of two or more neurons with Benjamini–Hochberg control.
    #[arg(long)]
    multi: bool,
    /// False discovery rate for --multi.
    #[arg(long, default_value_t = 0.05)]
    q: f64,
    /// Largest neuron count accepted by --multi.
    #[arg(long, default_value_t = DEFAULT_PATTERN_NEURON_CAP)]
    neuron_cap: usize,
}

#[derive(Args, Debug, Clone)]
struct FrameworkArgs {
    /// Data-generating framework: F1, F2, F3 or F4.
    #[arg(long, default_value = "F1", value_parser = parse_framework)]
    framework: Framework,
    /// Master seed; every repetition and trial draws from its own substream.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Neurons per trial (F4 requires 4).
    #[arg(long, default_value_t = 4)]
    neurons: usize,
    /// Fix the rate (or spontaneous intensity) of every neuron, in Hz.
    #[arg(long)]
    rate: Option<f64>,
    /// Fix the trial duration in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Fix the interaction height of F4, in Hz.
    #[arg(long)]
    beta: Option<f64>,
    /// Rate of the injected process of F2, in Hz.
    #[arg(long, default_value_t = 0.3)]
    inject_rate: f64,
    /// Simulated time before the window feeding Hawkes intensities, in seconds.
    #[arg(long, default_value_t = 0.0)]
    burn_in: f64,
}

impl FrameworkArgs {
    fn config(&self, trials: usize) -> FrameworkConfig {
        let mut cfg = FrameworkConfig::new(self.framework, self.seed, trials);
        cfg.neuron_count = self.neurons;
        cfg.inject_rate = self.inject_rate;
        cfg.hawkes.burn_in = self.burn_in;
        cfg.overrides = Overrides {
            duration: self.duration,
            rate: self.rate,
            beta: self.beta,
        };
        cfg
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    framework: FrameworkArgs,
    /// Number of trials.
    #[arg(long = "M", value_parser = parse_positive)]
    trials: usize,
    /// Repetition index selecting the parameter and trial substreams.
    #[arg(long, default_value_t = 0)]
    repetition: u64,
    /// Output file (.csv or .json); parameters go to <stem>.params.json.
    #[arg(long)]
    out: PathBuf,
    /// Output format; inferred from the extension when omitted.
    #[arg(long, value_parser = parse_format)]
    format: Option<Format>,
}

#[derive(Args, Debug, Clone)]
struct EvalArgs {
    #[command(flatten)]
    framework: FrameworkArgs,
    /// Monte-Carlo repetitions.
    #[arg(long, default_value_t = DEFAULT_REPETITIONS, value_parser = parse_positive)]
    repetitions: usize,
    /// Trial counts: start:stop:step or a comma list.
    #[arg(long = "M-grid", value_parser = parse_m_grid_arg)]
    m_grid: Option<TrialGrid>,
    /// Comma-separated methods.
    #[arg(long, default_value = "gaue,ue", value_delimiter = ',', value_parser = parse_method)]
    methods: Vec<Method>,
    /// Comma-separated test levels.
    #[arg(long, default_value = "0.05", value_delimiter = ',')]
    alpha: Vec<f64>,
    /// Coincidence delay in seconds.
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    /// UE bin width in seconds (default: 2 delta).
    #[arg(long)]
    bin_width: Option<f64>,
    /// 1-based neuron ids of the tested pattern (default: all neurons).
    #[arg(long)]
    pattern: Option<String>,
    /// Root of the curve directory tree.
    #[arg(long, default_value = "curves")]
    out_dir: PathBuf,
    /// Experiment name (subdirectory of --out-dir).
    #[arg(long)]
    experiment: Option<String>,
    /// Repetitions per batch; curves are rewritten after each batch.
    #[arg(long, default_value_t = 50)]
    batch: usize,
}

impl EvalArgs {
    fn run(&self) -> Result<EvalRun, Error> {
        let cfg = self.framework.config(1);
        let mut run = EvalRun::new(cfg);
        run.repetitions = self.repetitions;
        run.m_grid = self.m_grid.clone().map_or_else(default_m_grid, |g| g.0);
        run.methods = self.methods.clone();
        run.alphas = self.alpha.clone();
        run.delta = self.delta;
        run.bin_width = self.bin_width;
        run.pattern = self
            .pattern
            .as_deref()
            .map(|p| PatternSubset::parse(p, self.framework.neurons))
            .transpose()?;
        run.check()?;
        Ok(run)
    }

    fn experiment(&self, default: &str) -> String {
        self.experiment.clone().unwrap_or_else(|| default.to_string())
    }
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    eval: EvalArgs,
}

#[derive(Args, Debug)]
struct ScanArgs {
    #[command(flatten)]
    eval: EvalArgs,
    /// Comma-separated rates in Hz.
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    /// Comma-separated durations in seconds.
    #[arg(long, value_delimiter = ',')]
    duration_grid: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct HistogramArgs {
    #[command(flatten)]
    framework: FrameworkArgs,
    /// Trials per repetition.
    #[arg(long = "M", default_value_t = 50, value_parser = parse_positive)]
    trials: usize,
    /// False discovery rate.
    #[arg(long, default_value_t = 0.05)]
    q: f64,
    /// Monte-Carlo repetitions.
    #[arg(long, default_value_t = DEFAULT_REPETITIONS, value_parser = parse_positive)]
    repetitions: usize,
    /// Comma-separated methods.
    #[arg(long, default_value = "gaue,ue", value_delimiter = ',', value_parser = parse_method)]
    methods: Vec<Method>,
    /// Coincidence delay in seconds.
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    /// Root of the curve directory tree.
    #[arg(long, default_value = "curves")]
    out_dir: PathBuf,
    /// Experiment name (subdirectory of --out-dir).
    #[arg(long)]
    experiment: Option<String>,
}

fn parse_positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_format(s: &str) -> Result<Format, String> {
    match s.to_ascii_lowercase().as_str() {
        "csv" => Ok(Format::Csv),
        "json" => Ok(Format::Json),
        _ => Err(format!("unknown format {s:?} (csv or json)")),
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_framework(s: &str) -> Result<Framework, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Clone, Debug)]
struct TrialGrid(Vec<usize>);

fn parse_m_grid_arg(s: &str) -> Result<TrialGrid, String> {
    parse_m_grid(s).map(TrialGrid).map_err(|e| e.to_string())
}

/// Failure of a subcommand, mapped to an exit code.
enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Io(_) => "io",
        Error::Parse(_) => "parse",
        Error::InvalidTrialSet(_) => "invalid_trial_set",
        Error::InvalidWindow { .. } => "invalid_window",
        Error::InvalidPattern(_) => "invalid_pattern",
        Error::InvalidDelta { .. } => "invalid_delta",
        Error::Domain(_) => "domain",
        Error::CapExceeded { .. } => "cap_exceeded",
        Error::Asymmetric => "asymmetric",
        Error::ZeroIntensity { .. } => "zero_intensity",
        Error::DegenerateVariance { .. } => "degenerate_variance",
        Error::Explosion { .. } => "explosion",
    }
}

fn report_error(kind: &str, message: &str) {
    let body = serde_json::json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{body}");
}

fn emit<T: Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn input_format(path: &Path, format: Option<Format>) -> Format {
    format.unwrap_or_else(|| Format::from_path(path))
}

#[derive(Serialize)]
struct SingleReport<'a> {
    method: Method,
    pattern: &'a PatternSubset,
    delta: f64,
    alpha: f64,
    #[serde(flatten)]
    outcome: &'a TestOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    gaue: Option<coincide::independence::GaueComputation>,
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

fn print_multi_table(r: &MultiPatternReport) {
    println!("{:<16} {:>10} {:>12} {:>7} {:<12} flags", "pattern", "statistic", "p", "reject", "sign");
    for p in &r.patterns {
        println!(
            "{:<16} {:>10} {:>12.4e} {:>7} {:<12} {}",
            p.pattern.to_string(),
            fmt_opt(p.statistic),
            p.p,
            p.reject,
            format!("{:?}", p.sign).to_lowercase(),
            p.flags.iter().map(|f| format!("{f:?}")).collect::<Vec<_>>().join(",")
        );
    }
    println!("k0 = {:?}, q = {}", r.bh.k0, r.q);
}

fn cmd_test(args: &TestArgs, pretty: bool, exec: Execution) -> Result<bool, Failure> {
    let ts = load_trial_set(&args.input, input_format(&args.input, args.format))?;
    let settings = TestSettings {
        method: args.method,
        delta: args.delta,
        bin_width: args.bin_width,
    };
    if args.multi {
        let r = multi_pattern_test(&ts, &settings, args.q, args.neuron_cap, exec)?;
        if pretty {
            print_multi_table(&r);
        } else {
            emit(&r)?;
        }
        return Ok(!r.has_flags());
    }
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Failure::Usage(format!("--alpha {} must lie in (0, 1)", args.alpha)));
    }
    let pattern = match &args.pattern {
        Some(p) => PatternSubset::parse(p, ts.neuron_count())?,
        None => PatternSubset::new((0..ts.neuron_count()).collect(), ts.neuron_count())?,
    };
    let (outcome, gaue) = match args.method {
        Method::Gaue => {
            let g = gaue_compute(&ts, &pattern, args.delta)?;
            (gaue_outcome(&g, args.alpha), Some(g))
        }
        Method::Ue => (run_test(&ts, &pattern, &settings, args.alpha)?, None),
    };
    if pretty {
        println!("pattern    {pattern}");
        println!("method     {}", args.method);
        println!("statistic  {:.6}", outcome.statistic);
        println!("p-value    {:.6e}", outcome.p_value);
        println!("reject     {} (alpha = {})", outcome.reject, args.alpha);
        println!("sign       {}", format!("{:?}", outcome.sign).to_lowercase());
    } else {
        emit(&SingleReport {
            method: args.method,
            pattern: &pattern,
            delta: args.delta,
            alpha: args.alpha,
            outcome: &outcome,
            gaue,
        })?;
    }
    Ok(outcome.flags.is_empty())
}

fn params_path(out: &Path) -> PathBuf {
    out.with_extension("params.json")
}

fn cmd_simulate(args: &SimulateArgs, pretty: bool, exec: Execution) -> Result<bool, Failure> {
    let cfg = args.framework.config(args.trials);
    let (ts, params): (TrialSet, _) = sample_framework(&cfg, args.repetition, exec)?;
    let format = input_format(&args.out, args.format);
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(Error::from)?;
    }
    write_trial_set(&ts, &args.out, format)?;
    let sidecar = params_path(&args.out);
    let meta = serde_json::json!({
        "config": cfg,
        "repetition": args.repetition,
        "parameters": params,
        "library_version": env!("CARGO_PKG_VERSION"),
    });
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(&sidecar, text + "\n").map_err(Error::from)?;
    let summary = serde_json::json!({
        "out": args.out,
        "params": sidecar,
        "trials": ts.trial_count(),
        "neurons": ts.neuron_count(),
        "parameters": params,
    });
    if pretty {
        println!("wrote {} trials x {} neurons to {}", ts.trial_count(), ts.neuron_count(), args.out.display());
        println!("parameters in {}", sidecar.display());
    } else {
        emit(&summary)?;
    }
    Ok(true)
}

fn eval_summary(report: &coincide::harness::EvalReport) -> serde_json::Value {
    let cells: Vec<_> = report
        .cells
        .iter()
        .map(|c| {
            serde_json::json!({
                "method": c.method,
                "M": c.trials,
                "completed": c.completed,
                "failed": c.failed,
                "ks_statistic": c.ks_statistic,
                "ks_pvalue": c.ks_pvalue,
                "rejection_rate": c.rejection_rate,
                "excitatory_share": c.excitatory_share,
            })
        })
        .collect();
    serde_json::json!({
        "repetitions_done": report.repetitions_done,
        "cells": cells,
        "failure_samples": report.failure_samples,
    })
}

fn print_eval_table(report: &coincide::harness::EvalReport) {
    println!("{:<6} {:>5} {:>10} {:>10} {:>10} {:>7}", "method", "M", "KS(stat)", "KS(p)", "rate", "failed");
    for c in &report.cells {
        println!(
            "{:<6} {:>5} {:>10} {:>10} {:>10.4} {:>7}",
            c.method.to_string(),
            c.trials,
            fmt_opt(c.ks_statistic),
            fmt_opt(c.ks_pvalue),
            c.rejection_rate.first().copied().unwrap_or(f64::NAN),
            c.failed
        );
    }
}

fn cmd_evaluate(args: &EvaluateArgs, pretty: bool, exec: Execution) -> Result<bool, Failure> {
    let run = args.eval.run()?;
    let experiment = args.eval.experiment(&args.eval.framework.framework.to_string().to_lowercase());
    let out_dir = args.eval.out_dir.clone();
    let report = run_procedure_p_batched(&run, exec, args.eval.batch, |partial| {
        write_curves(
            &out_dir,
            &experiment,
            run.cfg.seed,
            &run,
            &partial.curves(),
            Some(eval_summary(partial)),
        )?;
        eprintln!("{}/{} repetitions", partial.repetitions_done, run.repetitions);
        Ok(())
    })?;
    if pretty {
        print_eval_table(&report);
    } else {
        let mut summary = eval_summary(&report);
        summary["out"] = serde_json::json!(out_dir.join(&experiment));
        emit(&summary)?;
    }
    Ok(true)
}

fn cmd_scan(args: &ScanArgs, pretty: bool, exec: Execution) -> Result<bool, Failure> {
    let run = args.eval.run()?;
    let rates = args.lambda_grid.clone().unwrap_or_else(default_rate_grid);
    let durations = args.duration_grid.clone().unwrap_or_else(default_duration_grid);
    let experiment = args.eval.experiment("scan");
    let mut all_cells: Vec<ScanCell> = Vec::new();
    // cell by cell so finished cells are on disk if the run is interrupted
    for &rate in &rates {
        for &duration in &durations {
            let mut cells = parameter_scan(&run, &[rate], &[duration], exec)?;
            all_cells.append(&mut cells);
            let curves: Vec<CurveData> = all_cells.iter().flat_map(|c| c.curves()).collect();
            let results: Vec<_> = all_cells
                .iter()
                .map(|c| serde_json::json!({ "rate": c.rate, "duration": c.duration, "summary": eval_summary(&c.report) }))
                .collect();
            write_curves(
                &args.eval.out_dir,
                &experiment,
                run.cfg.seed,
                &serde_json::json!({ "run": run, "lambda_grid": rates, "duration_grid": durations }),
                &curves,
                Some(serde_json::json!(results)),
            )?;
            eprintln!("cell lambda = {rate} Hz, b = {duration} s done");
        }
    }
    if pretty {
        for c in &all_cells {
            println!("lambda = {} Hz, b = {} s", c.rate, c.duration);
            print_eval_table(&c.report);
        }
    } else {
        let cells: Vec<_> = all_cells
            .iter()
            .map(|c| serde_json::json!({ "rate": c.rate, "duration": c.duration, "summary": eval_summary(&c.report) }))
            .collect();
        emit(&serde_json::json!({ "out": args.eval.out_dir.join(&experiment), "cells": cells }))?;
    }
    Ok(true)
}

fn cmd_histogram(args: &HistogramArgs, pretty: bool, exec: Execution) -> Result<bool, Failure> {
    let cfg = args.framework.config(args.trials);
    let h = detection_histogram(&cfg, args.q, args.repetitions, &args.methods, args.delta, exec)?;
    let experiment = args
        .experiment
        .clone()
        .unwrap_or_else(|| format!("{}_detections", args.framework.framework.to_string().to_lowercase()));
    write_curves(
        &args.out_dir,
        &experiment,
        cfg.seed,
        &cfg,
        &h.curves(),
        Some(serde_json::to_value(&h).map_err(|e| Error::Parse(e.to_string()))?),
    )?;
    if pretty {
        print!("{:<16}", "pattern");
        for m in &h.methods {
            print!(" {:>8}", m.method.to_string());
        }
        println!();
        for (i, p) in h.patterns.iter().enumerate() {
            print!("{:<16}", p.to_string());
            for m in &h.methods {
                print!(" {:>8.3}", m.frequencies[i]);
            }
            println!();
        }
    } else {
        emit(&h)?;
    }
    Ok(true)
}

/// Die quietly on a closed stdout (`coincide ... | head`) instead of panicking.
fn reset_sigpipe() {
    #[cfg(unix)]
    // SAFETY: restores the default disposition before any thread is spawned.
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

fn main() -> ExitCode {
    reset_sigpipe();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            report_error("usage", e.to_string().trim());
            return ExitCode::from(1);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            report_error("usage", "--threads must be at least 1");
            return ExitCode::from(1);
        }
        configure_threads(n);
    }
    let exec = Execution::Parallel;
    let result = match &cli.command {
        Command::Test(a) => cmd_test(a, cli.pretty, exec),
        Command::Simulate(a) => cmd_simulate(a, cli.pretty, exec),
        Command::Evaluate(a) => cmd_evaluate(a, cli.pretty, exec),
        Command::Scan(a) => cmd_scan(a, cli.pretty, exec),
        Command::Histogram(a) => cmd_histogram(a, cli.pretty, exec),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        // degeneracies were reported in the output itself
        Ok(false) => ExitCode::from(2),
        Err(Failure::Usage(msg)) => {
            report_error("usage", &msg);
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            report_error(error_kind(&e), &e.to_string());
            ExitCode::from(if e.is_degenerate() { 2 } else { 1 })
        }
    }
}
