//! The experiment matrix runner behind `aggnmf sweep`.
//!
//! Cells `(scheme, rate, repeat)` are processed in order. Each draws its
//! sampling scheme once, and every method, update rule and rank in the cell
//! recovers from the same observations, so comparisons are paired. Runs
//! within a cell execute on the worker pool. Rows are sorted before writing,
//! which makes `results.csv` independent of scheduling.

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{DatasetConfig, LambdaChoice, Method, SchemeKind, SweepConfig};
use super::io;
use crate::autocorr::PenaltyConfig;
use crate::datagen::{estimate_rho, matern_mixture_with_history};
use crate::error::{Error, Result};
use crate::measurement::{periodic_scheme, random_scheme, ObservationVector};
use crate::nmf::UpdateMethod;
use crate::recovery::{
    normalized_error, recover, recover_penalized_with, PenaltyProjectors, RecoveryOptions, RecoveryReport,
};
use crate::{derive_seed, SeriesMatrix};

/// Ground truth plus optional autocorrelation thresholds.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub truth: SeriesMatrix,
    pub rho: Option<Vec<f64>>,
}

/// Loads or generates the dataset. Thresholds come from, in order: the `rho`
/// file, the `history` file, or (synthetic data) the generated history.
pub fn load_dataset(cfg: &DatasetConfig) -> Result<Dataset> {
    let (truth, mut rho) = match &cfg.truth {
        Some(path) => (io::read_matrix(path)?, None),
        None => {
            let generated = matern_mixture_with_history(&cfg.synthetic)?;
            let rho = estimate_rho(generated.history.view())?;
            (generated.data.truth, Some(rho))
        }
    };
    let series = truth.ncols();
    if let Some(path) = &cfg.rho {
        rho = Some(io::read_rho(path, series)?);
    } else if let Some(path) = &cfg.history {
        let history = io::read_matrix(path)?;
        if history.ncols() != series {
            return Err(Error::Dimension(format!(
                "history has {} columns, ground truth has {series}",
                history.ncols()
            )));
        }
        rho = Some(estimate_rho(history.view())?);
    }
    Ok(Dataset { name: cfg.name.clone(), truth, rho })
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub dataset: String,
    pub scheme: SchemeKind,
    pub rate: f64,
    pub method: Method,
    /// Empty for the interpolation baseline.
    pub update: Option<UpdateMethod>,
    pub rank: Option<usize>,
    pub repeat: usize,
    /// Seed of the repeat: the scheme is drawn from it, and the factor
    /// initialization for rank `K` uses `derive_seed(seed, [K])`.
    pub seed: u64,
    pub error: Option<f64>,
    pub runtime: Option<f64>,
    pub converged: Option<bool>,
    pub min_entry: Option<f64>,
    /// `ok`, or the failure message.
    pub status: String,
    sort_key: [usize; 6],
}

/// Mean best-rank error of one `(scheme, rate, method, update)` group.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub dataset: String,
    pub scheme: SchemeKind,
    pub rate: f64,
    pub method: Method,
    pub update: Option<UpdateMethod>,
    pub best_rank: Option<usize>,
    pub mean_error: f64,
    /// Successful repeats behind `mean_error`.
    pub repeats: usize,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SummaryRow>,
    /// Penalty weight used by penalized cells, if any ran.
    pub lambda: Option<f64>,
}

impl SweepOutcome {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.status != "ok").count()
    }
}

fn kind_code(kind: SchemeKind) -> u64 {
    match kind {
        SchemeKind::Periodic => 0,
        SchemeKind::Random => 1,
    }
}

/// Seed of one repeat; depends on the cell's values, not on list positions.
pub fn repeat_seed(base: u64, kind: SchemeKind, interval: usize, rate: f64, repeat: usize) -> u64 {
    derive_seed(base, &[kind_code(kind), interval as u64, rate.to_bits(), repeat as u64])
}

struct Task {
    method: Method,
    update: Option<UpdateMethod>,
    rank: Option<usize>,
    key: [usize; 3],
}

/// Runs the whole matrix on a pool of `jobs` threads (all cores if `None`).
pub fn run_sweep(cfg: &SweepConfig, jobs: Option<usize>) -> Result<SweepOutcome> {
    cfg.validate()?;
    let dataset = load_dataset(&cfg.dataset)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be >= 1".into()));
        }
        builder = builder.num_threads(jobs);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    pool.install(|| run_matrix(cfg, &dataset))
}

fn penalty_for(cfg: &SweepConfig, dataset: &Dataset) -> Result<Option<PenaltyConfig>> {
    if !cfg.methods.contains(&Method::Penalized) {
        return Ok(None);
    }
    let rho = dataset.rho.clone().ok_or_else(|| {
        Error::Config("the penalized method needs thresholds: set dataset.rho or dataset.history".into())
    })?;
    let periods = dataset.truth.nrows();
    let penalty = match cfg.solver.lambda {
        LambdaChoice::Auto => PenaltyConfig::with_heuristic_lambda(rho, periods)?,
        LambdaChoice::Value(v) => PenaltyConfig::new(rho, v)?,
    };
    penalty.check_admissible(periods, dataset.truth.ncols())?;
    Ok(Some(penalty))
}

fn run_matrix(cfg: &SweepConfig, dataset: &Dataset) -> Result<SweepOutcome> {
    let (periods, series) = dataset.truth.dim();
    let penalty = penalty_for(cfg, dataset)?;
    let base_opts = RecoveryOptions {
        epsilon_scale: cfg.solver.epsilon_scale,
        max_iters: cfg.solver.max_iters,
        hals_sweeps: cfg.solver.hals_sweeps,
        nesterov_inner: cfg.solver.nesterov_inner,
        projector_storage: cfg.solver.projector_storage,
        activation: cfg.solver.activation,
        time_limit: cfg.solver.time_limit_secs.map(std::time::Duration::from_secs_f64),
        ..RecoveryOptions::default()
    };

    let mut tasks = Vec::new();
    for (mi, &method) in cfg.methods.iter().enumerate() {
        if method == Method::Interpolation {
            tasks.push(Task { method, update: None, rank: None, key: [mi, 0, 0] });
            continue;
        }
        for (ui, &update) in cfg.updates.iter().enumerate() {
            for (ki, &rank) in cfg.ranks.iter().enumerate() {
                tasks.push(Task { method, update: Some(update), rank: Some(rank), key: [mi, ui, ki] });
            }
        }
    }

    let mut rows = Vec::new();
    for (si, &kind) in cfg.schemes.iter().enumerate() {
        for (ri, (&interval, &rate)) in cfg.intervals.iter().zip(&cfg.rates).enumerate() {
            for repeat in 0..cfg.repeats {
                let seed = repeat_seed(cfg.seed, kind, interval, rate, repeat);
                let started = Instant::now();
                let row = |task: &Task| SweepRow {
                    dataset: dataset.name.clone(),
                    scheme: kind,
                    rate,
                    method: task.method,
                    update: task.update,
                    rank: task.rank,
                    repeat,
                    seed,
                    error: None,
                    runtime: None,
                    converged: None,
                    min_entry: None,
                    status: "ok".into(),
                    sort_key: [si, ri, task.key[0], task.key[1], task.key[2], repeat],
                };

                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let drawn = match kind {
                    SchemeKind::Periodic => periodic_scheme(periods, series, interval, &mut rng),
                    SchemeKind::Random => random_scheme(periods, series, rate, &mut rng),
                }
                .and_then(|scheme| scheme.observe(dataset.truth.view()));
                let b = match drawn {
                    Ok(b) => b,
                    Err(e) => {
                        log::warn!("{} rate {rate} repeat {repeat}: {e}", kind.as_str());
                        rows.extend(tasks.iter().map(|t| SweepRow { status: e.to_string(), ..row(t) }));
                        continue;
                    }
                };
                let projectors = match &penalty {
                    Some(p) => Some(PenaltyProjectors::build(&b, p, cfg.solver.projector_storage)),
                    None => None,
                };

                let cell_rows: Vec<SweepRow> = tasks
                    .par_iter()
                    .map(|task| {
                        let mut out = row(task);
                        let t0 = Instant::now();
                        let result = run_task(task, &b, &base_opts, penalty.as_ref(), projectors.as_ref(), seed)
                            .and_then(|run| {
                                let error = normalized_error(run.v.view(), dataset.truth.view())?;
                                Ok((run, error))
                            });
                        let elapsed = t0.elapsed().as_secs_f64();
                        match result {
                            Ok((run, error)) => {
                                out.error = Some(error);
                                out.converged = run.converged;
                                out.min_entry = Some(run.min_entry);
                                if cfg.record_runtime {
                                    out.runtime = Some(elapsed);
                                }
                            }
                            Err(e) => out.status = e.to_string(),
                        }
                        out
                    })
                    .collect();
                log::info!(
                    "{} rate {rate} repeat {repeat}: {} runs in {:.1}s",
                    kind.as_str(),
                    cell_rows.len(),
                    started.elapsed().as_secs_f64()
                );
                rows.extend(cell_rows);
            }
        }
    }
    rows.sort_by_key(|r| r.sort_key);
    let summary = summarize(&rows);
    Ok(SweepOutcome { rows, summary, lambda: penalty.map(|p| p.lambda) })
}

struct TaskRun {
    v: SeriesMatrix,
    converged: Option<bool>,
    min_entry: f64,
}

impl From<RecoveryReport> for TaskRun {
    fn from(report: RecoveryReport) -> Self {
        let min_entry = report.trace.last().map_or(0.0, |r| r.min_entry);
        TaskRun { converged: Some(report.converged()), min_entry, v: report.v }
    }
}

fn run_task(
    task: &Task,
    b: &ObservationVector,
    base: &RecoveryOptions,
    penalty: Option<&PenaltyConfig>,
    projectors: Option<&Result<PenaltyProjectors>>,
    seed: u64,
) -> Result<TaskRun> {
    let (Some(update), Some(rank)) = (task.update, task.rank) else {
        let v = b.interpolation_baseline();
        let min_entry = v.iter().copied().fold(f64::INFINITY, f64::min);
        return Ok(TaskRun { v, converged: None, min_entry });
    };
    let opts = RecoveryOptions { rank, update, seed: derive_seed(seed, &[rank as u64]), ..base.clone() };
    match task.method {
        Method::Penalized => {
            let projectors = match projectors {
                Some(Ok(p)) => p,
                Some(Err(e)) => return Err(Error::Numerical(format!("projector construction failed: {e}"))),
                None => return Err(Error::Config("penalized method without thresholds".into())),
            };
            let opts = RecoveryOptions { penalty: penalty.cloned(), ..opts };
            Ok(recover_penalized_with(b, &opts, projectors)?.into())
        }
        _ => Ok(recover(b, &opts)?.into()),
    }
}

/// Per group, the rank with the smallest mean error over repeats (smaller
/// rank on ties). Failed runs are left out of the means.
pub fn summarize(rows: &[SweepRow]) -> Vec<SummaryRow> {
    use std::collections::BTreeMap;
    // (scheme, rate, method, update) -> rank -> errors, keyed by sort order.
    let mut groups: BTreeMap<[usize; 4], (SummaryRow, BTreeMap<(usize, Option<usize>), Vec<f64>>)> = BTreeMap::new();
    for r in rows {
        let key = [r.sort_key[0], r.sort_key[1], r.sort_key[2], r.sort_key[3]];
        let entry = groups.entry(key).or_insert_with(|| {
            (
                SummaryRow {
                    dataset: r.dataset.clone(),
                    scheme: r.scheme,
                    rate: r.rate,
                    method: r.method,
                    update: r.update,
                    best_rank: None,
                    mean_error: f64::NAN,
                    repeats: 0,
                },
                BTreeMap::new(),
            )
        });
        if let Some(e) = r.error {
            entry.1.entry((r.sort_key[4], r.rank)).or_default().push(e);
        }
    }
    groups
        .into_values()
        .filter_map(|(mut summary, by_rank)| {
            let mut best: Option<(f64, Option<usize>, usize)> = None;
            for ((_, rank), errors) in by_rank {
                let mean = errors.iter().sum::<f64>() / errors.len() as f64;
                let better = match best {
                    None => true,
                    Some((m, r, _)) => mean < m || (mean == m && rank < r),
                };
                if better {
                    best = Some((mean, rank, errors.len()));
                }
            }
            let (mean, rank, count) = best?;
            summary.best_rank = rank;
            summary.mean_error = mean;
            summary.repeats = count;
            Some(summary)
        })
        .collect()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const RESULTS_HEADER: [&str; 13] = [
    "dataset", "scheme", "rate", "method", "update", "K", "repeat", "seed", "error", "runtime", "converged",
    "min_entry", "status",
];

pub fn write_results(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(RESULTS_HEADER).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.write_record([
            r.dataset.clone(),
            r.scheme.as_str().to_string(),
            r.rate.to_string(),
            r.method.as_str().to_string(),
            opt(r.update.map(|u| u.as_str())),
            opt(r.rank),
            r.repeat.to_string(),
            r.seed.to_string(),
            opt(r.error.map(io::format_value)),
            opt(r.runtime.map(|t| format!("{t:.6}"))),
            opt(r.converged),
            opt(r.min_entry.map(io::format_value)),
            r.status.clone(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_summary(path: &Path, summary: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["dataset", "scheme", "rate", "method", "update", "best_K", "mean_error", "repeats"])
        .map_err(|e| Error::csv(path, e))?;
    for s in summary {
        w.write_record([
            s.dataset.clone(),
            s.scheme.as_str().to_string(),
            s.rate.to_string(),
            s.method.as_str().to_string(),
            opt(s.update.map(|u| u.as_str())),
            opt(s.best_rank),
            io::format_value(s.mean_error),
            s.repeats.to_string(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
