use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use aggnmf::autocorr::ProjectorStorage;
use aggnmf::harness::{
    cmd_evaluate, cmd_recover, cmd_sample, cmd_simulate, cmd_sweep, io, LambdaChoice, RecoverArgs,
    SchemeRequest, SimulateConfig, SweepConfig,
};
use aggnmf::nmf::UpdateMethod;
use aggnmf::recovery::Activation;
use aggnmf::{Error, Result};

/// Recover fine-grained nonnegative time series from temporal aggregates.
#[derive(Parser)]
#[command(name = "aggnmf", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic ground truth, history and autocorrelation thresholds.
    Simulate(SimulateCmd),
    /// Draw a sampling scheme for a matrix and write its aggregates.
    Sample(SampleCmd),
    /// Recover the full matrix from a scheme and its aggregates.
    Recover(RecoverCmd),
    /// Normalized Frobenius error of an estimate against ground truth.
    Evaluate(EvaluateCmd),
    /// Run the experiment matrix and write plot-ready CSVs.
    Sweep(SweepCmd),
}

#[derive(Args)]
struct SimulateCmd {
    /// TOML file with a [synthetic] table.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "simulated")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    periods: Option<usize>,
    #[arg(long)]
    series: Option<usize>,
    /// Number of latent paths.
    #[arg(long)]
    rank: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Periodic,
    Random,
}

#[derive(Args)]
struct SampleCmd {
    /// Matrix CSV to sample from.
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long, value_enum)]
    scheme: SchemeArg,
    /// Observation interval for the periodic scheme.
    #[arg(long)]
    interval: Option<usize>,
    /// Fraction of observed periods per column for the random scheme.
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "sampled")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum UpdateArg {
    Hals,
    Nesterov,
}

impl From<UpdateArg> for UpdateMethod {
    fn from(u: UpdateArg) -> Self {
        match u {
            UpdateArg::Hals => UpdateMethod::Hals,
            UpdateArg::Nesterov => UpdateMethod::Nesterov,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StorageArg {
    Dense,
    Lean,
}

#[derive(Clone, Copy, ValueEnum)]
enum ActivationArg {
    PerIteration,
    Always,
}

#[derive(Args)]
struct RecoverCmd {
    /// Scheme CSV (`column,start,length`).
    #[arg(long = "scheme-file")]
    scheme: PathBuf,
    /// Observations CSV (`segment,value`).
    #[arg(long)]
    observations: PathBuf,
    /// Number of periods T; inferred from the scheme if omitted.
    #[arg(long, requires = "series")]
    periods: Option<usize>,
    /// Number of series N; inferred from the scheme if omitted.
    #[arg(long, requires = "periods")]
    series: Option<usize>,
    #[arg(long)]
    rank: usize,
    #[arg(long, value_enum, default_value = "hals")]
    update: UpdateArg,
    /// Use the autocorrelation-penalized driver (needs --rho-file).
    #[arg(long)]
    penalized: bool,
    #[arg(long)]
    rho_file: Option<PathBuf>,
    /// `auto` or a value >= 0.
    #[arg(long, default_value = "auto")]
    lambda: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    epsilon_scale: f64,
    #[arg(long, default_value_t = 1)]
    hals_sweeps: usize,
    #[arg(long, default_value_t = 20)]
    nesterov_inner: usize,
    #[arg(long, value_enum, default_value = "dense")]
    projector_storage: StorageArg,
    #[arg(long, value_enum, default_value = "per-iteration")]
    activation: ActivationArg,
    /// Ground truth CSV; adds the final error to the manifest.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value = "recovered")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateCmd {
    #[arg(long)]
    estimate: PathBuf,
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Args)]
struct SweepCmd {
    /// TOML experiment matrix; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the reduced matrix (ranks 5, 10, 20; rates 0.1, 0.03).
    #[arg(long, conflicts_with = "config")]
    smoke: bool,
    #[arg(long, default_value = "sweep")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Comma-separated ranks, e.g. 2,5,10.
    #[arg(long, value_delimiter = ',')]
    ranks: Option<Vec<usize>>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    epsilon_scale: Option<f64>,
    /// Fill the runtime column (results then differ between runs).
    #[arg(long)]
    record_runtime: bool,
    /// Print the effective configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(c) => {
            let mut cfg: SimulateConfig = match &c.config {
                Some(path) => io::read_toml(path)?,
                None => SimulateConfig::default(),
            };
            if let Some(seed) = c.seed {
                cfg.synthetic.seed = seed;
            }
            if let Some(t) = c.periods {
                cfg.synthetic.periods = t;
            }
            if let Some(n) = c.series {
                cfg.synthetic.series = n;
            }
            if let Some(k) = c.rank {
                cfg.synthetic.rank = k;
            }
            let out = cmd_simulate(&cfg, &c.out)?;
            println!("wrote {} ({}x{}), {}, {}", out.truth.display(), out.shape.0, out.shape.1, out.history.display(), out.rho.display());
        }
        Command::Sample(c) => {
            let request = match (c.scheme, c.interval, c.rate) {
                (SchemeArg::Periodic, Some(interval), None) => SchemeRequest::Periodic { interval },
                (SchemeArg::Random, None, Some(rate)) => SchemeRequest::Random { rate },
                (SchemeArg::Periodic, _, _) => {
                    return Err(Error::Config("--scheme periodic takes --interval (and no --rate)".into()))
                }
                (SchemeArg::Random, _, _) => {
                    return Err(Error::Config("--scheme random takes --rate (and no --interval)".into()))
                }
            };
            let out = cmd_sample(&c.matrix, request, c.seed, &c.out)?;
            println!(
                "{} segments over {}x{}; coverage {:.4}; wrote {} and {}",
                out.segments,
                out.shape.0,
                out.shape.1,
                out.coverage,
                out.scheme.display(),
                out.observations.display()
            );
        }
        Command::Recover(c) => {
            let args = RecoverArgs {
                scheme: c.scheme,
                observations: c.observations,
                shape: c.periods.zip(c.series),
                rank: c.rank,
                update: c.update.into(),
                penalized: c.penalized,
                rho: c.rho_file,
                lambda: c.lambda.parse::<LambdaChoice>()?,
                seed: c.seed,
                max_iters: c.max_iters,
                epsilon_scale: c.epsilon_scale,
                hals_sweeps: c.hals_sweeps,
                nesterov_inner: c.nesterov_inner,
                projector_storage: match c.projector_storage {
                    StorageArg::Dense => ProjectorStorage::Dense,
                    StorageArg::Lean => ProjectorStorage::Lean,
                },
                activation: match c.activation {
                    ActivationArg::PerIteration => Activation::PerIteration,
                    ActivationArg::Always => Activation::Always,
                },
                truth: c.truth,
            };
            let out = cmd_recover(&args, &c.out)?;
            let status = if out.converged { "converged" } else { "not converged" };
            print!("{} after {} iterations (lambda {})", status, out.iterations, out.lambda);
            if let Some(e) = out.final_error {
                print!("; normalized error {e:.6e}");
            }
            println!("; wrote {}", out.estimate.display());
        }
        Command::Evaluate(c) => {
            let error = cmd_evaluate(&c.estimate, &c.truth)?;
            println!("normalized_error={error:.16e}");
        }
        Command::Sweep(c) => {
            let mut cfg = match (&c.config, c.smoke) {
                (Some(path), _) => io::read_toml::<SweepConfig>(path)?,
                (None, true) => SweepConfig::smoke(),
                (None, false) => SweepConfig::default(),
            };
            if let Some(seed) = c.seed {
                cfg.seed = seed;
            }
            if let Some(r) = c.repeats {
                cfg.repeats = r;
            }
            if let Some(ranks) = c.ranks {
                cfg.ranks = ranks;
            }
            if let Some(l) = &c.lambda {
                cfg.solver.lambda = l.parse()?;
            }
            if let Some(m) = c.max_iters {
                cfg.solver.max_iters = m;
            }
            if let Some(e) = c.epsilon_scale {
                cfg.solver.epsilon_scale = e;
            }
            cfg.record_runtime |= c.record_runtime;
            if c.print_config {
                let text = toml::to_string_pretty(&cfg).map_err(|e| Error::Config(e.to_string()))?;
                print!("{text}");
                return Ok(());
            }
            let (outcome, files) = cmd_sweep(&cfg, c.jobs, &c.out)?;
            println!(
                "{} rows ({} failed); wrote {} and {}",
                outcome.rows.len(),
                outcome.failures(),
                files.results.display(),
                files.summary.display()
            );
            for s in &outcome.summary {
                println!(
                    "{:<9} rate {:<5} {:<13} {:<9} K={:<3} error {:.4}",
                    s.scheme.as_str(),
                    s.rate,
                    s.method.as_str(),
                    s.update.map_or("", |u| u.as_str()),
                    s.best_rank.map_or(String::from("-"), |k| k.to_string()),
                    s.mean_error
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
