//! Commands behind the `aggnmf` binary. Each takes typed arguments, writes
//! its files into an output directory and returns what it wrote, so the
//! binary only parses flags and maps errors to exit codes.

pub mod config;
pub mod io;
pub mod sweep;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autocorr::{PenaltyConfig, ProjectorStorage};
use crate::datagen::{estimate_rho, matern_mixture_with_history};
use crate::error::{Error, Result};
use crate::measurement::{periodic_scheme, random_scheme};
use crate::nmf::UpdateMethod;
use crate::recovery::{normalized_error, recover, recover_penalized, Activation, RecoveryOptions, StopReason};

pub use config::{LambdaChoice, Method, SchemeKind, SimulateConfig, SweepConfig};
pub use sweep::{run_sweep, SweepOutcome};

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Debug, Serialize)]
struct SimulateManifest<'a> {
    command: &'static str,
    version: &'static str,
    mixture_weights: &'static str,
    history_rows: usize,
    config: &'a SimulateConfig,
}

/// Files written by [`cmd_simulate`].
#[derive(Debug, Clone)]
pub struct SimulateOutput {
    pub truth: PathBuf,
    pub history: PathBuf,
    pub rho: PathBuf,
    pub manifest: PathBuf,
    pub shape: (usize, usize),
}

/// Synthetic ground truth, its history and the thresholds estimated from the
/// history.
pub fn cmd_simulate(cfg: &SimulateConfig, out: &Path) -> Result<SimulateOutput> {
    cfg.synthetic.validate()?;
    let generated = matern_mixture_with_history(&cfg.synthetic)?;
    let rho = estimate_rho(generated.history.view())?;
    create_dir(out)?;
    let output = SimulateOutput {
        truth: out.join("truth.csv"),
        history: out.join("history.csv"),
        rho: out.join("rho.csv"),
        manifest: out.join("manifest.toml"),
        shape: generated.data.truth.dim(),
    };
    io::write_matrix(&output.truth, &generated.data.truth)?;
    io::write_matrix(&output.history, &generated.history)?;
    io::write_rho(&output.rho, &rho)?;
    io::write_toml(
        &output.manifest,
        &SimulateManifest {
            command: "simulate",
            version: VERSION,
            mixture_weights: "iid uniform(0, 1)",
            history_rows: generated.history.nrows(),
            config: cfg,
        },
    )?;
    Ok(output)
}

/// Sampling scheme requested on the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchemeRequest {
    Periodic { interval: usize },
    Random { rate: f64 },
}

#[derive(Debug, Serialize)]
struct SampleManifest {
    command: &'static str,
    version: &'static str,
    matrix: String,
    scheme: &'static str,
    interval: Option<usize>,
    rate: Option<f64>,
    seed: u64,
    periods: usize,
    series: usize,
    segments: usize,
    coverage: f64,
}

#[derive(Debug, Clone)]
pub struct SampleOutput {
    pub scheme: PathBuf,
    pub observations: PathBuf,
    pub manifest: PathBuf,
    pub segments: usize,
    pub coverage: f64,
    pub shape: (usize, usize),
}

/// Draws a scheme for the matrix in `matrix` and writes it with the
/// resulting aggregates.
pub fn cmd_sample(matrix: &Path, request: SchemeRequest, seed: u64, out: &Path) -> Result<SampleOutput> {
    let truth = io::read_matrix(matrix)?;
    let (periods, series) = truth.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scheme = match request {
        SchemeRequest::Periodic { interval } => periodic_scheme(periods, series, interval, &mut rng)?,
        SchemeRequest::Random { rate } => random_scheme(periods, series, rate, &mut rng)?,
    };
    let b = scheme.observe(truth.view())?;
    create_dir(out)?;
    let output = SampleOutput {
        scheme: out.join("scheme.csv"),
        observations: out.join("observations.csv"),
        manifest: out.join("manifest.toml"),
        segments: scheme.len(),
        coverage: scheme.coverage_fraction(),
        shape: (periods, series),
    };
    io::write_scheme(&output.scheme, &scheme)?;
    io::write_observations(&output.observations, &b)?;
    let (kind, interval, rate) = match request {
        SchemeRequest::Periodic { interval } => ("periodic", Some(interval), None),
        SchemeRequest::Random { rate } => ("random", None, Some(rate)),
    };
    io::write_toml(
        &output.manifest,
        &SampleManifest {
            command: "sample",
            version: VERSION,
            matrix: matrix.display().to_string(),
            scheme: kind,
            interval,
            rate,
            seed,
            periods,
            series,
            segments: output.segments,
            coverage: output.coverage,
        },
    )?;
    Ok(output)
}

/// Inputs and options of [`cmd_recover`].
#[derive(Debug, Clone)]
pub struct RecoverArgs {
    pub scheme: PathBuf,
    pub observations: PathBuf,
    /// `(T, N)`; inferred from the scheme when absent.
    pub shape: Option<(usize, usize)>,
    pub rank: usize,
    pub update: UpdateMethod,
    pub penalized: bool,
    pub rho: Option<PathBuf>,
    pub lambda: LambdaChoice,
    pub seed: u64,
    pub max_iters: usize,
    pub epsilon_scale: f64,
    pub hals_sweeps: usize,
    pub nesterov_inner: usize,
    pub projector_storage: ProjectorStorage,
    pub activation: Activation,
    /// Ground truth for the final error, if known.
    pub truth: Option<PathBuf>,
}

impl Default for RecoverArgs {
    fn default() -> Self {
        let d = RecoveryOptions::default();
        Self {
            scheme: PathBuf::new(),
            observations: PathBuf::new(),
            shape: None,
            rank: d.rank,
            update: d.update,
            penalized: false,
            rho: None,
            lambda: LambdaChoice::Auto,
            seed: d.seed,
            max_iters: d.max_iters,
            epsilon_scale: d.epsilon_scale,
            hals_sweeps: d.hals_sweeps,
            nesterov_inner: d.nesterov_inner,
            projector_storage: d.projector_storage,
            activation: d.activation,
            truth: None,
        }
    }
}

#[derive(Debug, Serialize)]
struct RecoverManifest {
    command: &'static str,
    version: &'static str,
    scheme: String,
    observations: String,
    periods: usize,
    series: usize,
    segments: usize,
    rank: usize,
    update: &'static str,
    penalized: bool,
    activation: &'static str,
    projector_storage: ProjectorStorage,
    lambda: f64,
    seed: u64,
    max_iters: usize,
    epsilon_scale: f64,
    epsilon: f64,
    hals_sweeps: usize,
    nesterov_inner: usize,
    iterations: usize,
    stop_reason: &'static str,
    converged: bool,
    runtime_secs: f64,
    most_negative_entry: f64,
    /// Entries of the final iterate below 0, set to 0 in the exported matrix.
    clipped_entries: usize,
    final_error: Option<f64>,
    warning_count: usize,
    warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RecoverOutput {
    pub estimate: PathBuf,
    pub trace: PathBuf,
    pub manifest: PathBuf,
    pub iterations: usize,
    pub converged: bool,
    pub lambda: f64,
    pub clipped_entries: usize,
    pub final_error: Option<f64>,
}

/// Runs one recovery and writes `V.csv`, `trace.csv` and `manifest.toml`.
///
/// The exported estimate is clipped at 0. The penalized projector does not
/// enforce nonnegativity, so the manifest records how many entries that
/// touched.
pub fn cmd_recover(args: &RecoverArgs, out: &Path) -> Result<RecoverOutput> {
    if args.penalized && args.rho.is_none() {
        return Err(Error::Config("--penalized requires --rho-file".into()));
    }
    let scheme = io::read_scheme(&args.scheme, args.shape)?;
    let b = io::read_observations(&args.observations, scheme)?;
    let (periods, series) = b.shape();
    let truth = match &args.truth {
        Some(path) => {
            let truth = io::read_matrix(path)?;
            if truth.dim() != (periods, series) {
                return Err(Error::Dimension(format!(
                    "ground truth is {}x{}, observations describe {periods}x{series}",
                    truth.nrows(),
                    truth.ncols()
                )));
            }
            Some(truth)
        }
        None => None,
    };

    let penalty = match (&args.rho, args.penalized) {
        (Some(path), true) => {
            let rho = io::read_rho(path, series)?;
            Some(match args.lambda {
                LambdaChoice::Auto => PenaltyConfig::with_heuristic_lambda(rho, periods)?,
                LambdaChoice::Value(v) => PenaltyConfig::new(rho, v)?,
            })
        }
        _ => None,
    };
    let opts = RecoveryOptions {
        rank: args.rank,
        update: args.update,
        epsilon_scale: args.epsilon_scale,
        max_iters: args.max_iters,
        seed: args.seed,
        hals_sweeps: args.hals_sweeps,
        nesterov_inner: args.nesterov_inner,
        penalty,
        projector_storage: args.projector_storage,
        activation: args.activation,
        time_limit: None,
    };
    let started = Instant::now();
    let report = if opts.penalty.is_some() { recover_penalized(&b, &opts)? } else { recover(&b, &opts)? };
    let runtime = started.elapsed().as_secs_f64();

    let clipped_entries = report.v.iter().filter(|v| **v < 0.0).count();
    let estimate = report.v.mapv(|v| v.max(0.0));
    let final_error = match &truth {
        Some(t) => Some(normalized_error(estimate.view(), t.view())?),
        None => None,
    };

    create_dir(out)?;
    let output = RecoverOutput {
        estimate: out.join("V.csv"),
        trace: out.join("trace.csv"),
        manifest: out.join("manifest.toml"),
        iterations: report.iterations,
        converged: report.converged(),
        lambda: report.lambda,
        clipped_entries,
        final_error,
    };
    io::write_matrix(&output.estimate, &estimate)?;
    write_trace(&output.trace, &report.trace)?;
    if clipped_entries > 0 {
        log::warn!("{clipped_entries} negative entries clipped to 0 in {}", output.estimate.display());
    }
    let stop_reason = match report.stop_reason {
        StopReason::Kkt => "kkt",
        StopReason::IterationCap => "iteration-cap",
        StopReason::TimeLimit => "time-limit",
    };
    io::write_toml(
        &output.manifest,
        &RecoverManifest {
            command: "recover",
            version: VERSION,
            scheme: args.scheme.display().to_string(),
            observations: args.observations.display().to_string(),
            periods,
            series,
            segments: b.scheme().len(),
            rank: args.rank,
            update: args.update.as_str(),
            penalized: opts.penalty.is_some(),
            activation: args.activation.as_str(),
            projector_storage: args.projector_storage,
            lambda: report.lambda,
            seed: args.seed,
            max_iters: args.max_iters,
            epsilon_scale: args.epsilon_scale,
            epsilon: report.epsilon,
            hals_sweeps: args.hals_sweeps,
            nesterov_inner: args.nesterov_inner,
            iterations: report.iterations,
            stop_reason,
            converged: report.converged(),
            runtime_secs: runtime,
            most_negative_entry: report.most_negative(),
            clipped_entries,
            final_error,
            warning_count: report.warnings.len(),
            warnings: report.warnings.iter().take(20).cloned().collect(),
        },
    )?;
    Ok(output)
}

fn write_trace(path: &Path, trace: &[crate::recovery::TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["iter", "objective", "penalized_objective", "kkt", "constraint_violation", "min_entry"])
        .map_err(|e| Error::csv(path, e))?;
    for r in trace {
        w.write_record([
            r.iteration.to_string(),
            io::format_value(r.objective),
            io::format_value(r.penalized_objective),
            io::format_value(r.kkt),
            io::format_value(r.constraint_violation),
            io::format_value(r.min_entry),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Normalized Frobenius error of `estimate` against `truth`.
pub fn cmd_evaluate(estimate: &Path, truth: &Path) -> Result<f64> {
    let v = io::read_matrix(estimate)?;
    let t = io::read_matrix(truth)?;
    normalized_error(v.view(), t.view())
}

#[derive(Debug, Serialize)]
struct SweepManifest<'a> {
    command: &'static str,
    version: &'static str,
    rows: usize,
    failures: usize,
    lambda: Option<f64>,
    /// Only present with `record_runtime`, to keep reruns byte-identical.
    runtime_secs: Option<f64>,
    config: &'a SweepConfig,
}

#[derive(Debug, Clone)]
pub struct SweepFiles {
    pub results: PathBuf,
    pub summary: PathBuf,
    pub manifest: PathBuf,
}

/// Runs the experiment matrix and writes `results.csv`, `summary.csv` and
/// `manifest.toml`.
pub fn cmd_sweep(cfg: &SweepConfig, jobs: Option<usize>, out: &Path) -> Result<(SweepOutcome, SweepFiles)> {
    let started = Instant::now();
    let outcome = run_sweep(cfg, jobs)?;
    create_dir(out)?;
    let files = SweepFiles {
        results: out.join("results.csv"),
        summary: out.join("summary.csv"),
        manifest: out.join("manifest.toml"),
    };
    sweep::write_results(&files.results, &outcome.rows)?;
    sweep::write_summary(&files.summary, &outcome.summary)?;
    io::write_toml(
        &files.manifest,
        &SweepManifest {
            command: "sweep",
            version: VERSION,
            rows: outcome.rows.len(),
            failures: outcome.failures(),
            lambda: outcome.lambda,
            runtime_secs: cfg.record_runtime.then(|| started.elapsed().as_secs_f64()),
            config: cfg,
        },
    )?;
    Ok((outcome, files))
}
