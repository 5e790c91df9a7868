//! Outer block-coordinate-descent drivers.
//!
//! Each outer iteration updates `W`, then `H`, then `V`. The plain driver
//! projects `WH` onto `{V ≥ 0 : A(V) = b}`; the penalized driver replaces that
//! step with the closed-form penalized column projectors, switching each
//! column between its penalized and unpenalized projector depending on
//! whether `WH` already satisfies the autocorrelation constraint.
//!
//! That switch makes the penalized objective piecewise: a column changing
//! state between two iterations can raise it. [`Activation::Always`] keeps
//! every applicable column penalized, which turns each block step into an
//! exact minimization of one fixed objective and restores monotonicity.

mod sweep;

pub use sweep::{rank_sweep, RankSweep, RankSweepRow};

use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autocorr::{autocorr_value, ColumnProjector, PenaltyConfig, ProjectorStorage};
use crate::error::{Error, Result};
use crate::measurement::ObservationVector;
use crate::nmf::{update_factor, FactorPair, UpdateMethod};
use crate::projection::project_data;
use crate::SeriesMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryOptions {
    pub rank: usize,
    pub update: UpdateMethod,
    /// Stop once `‖R(W)‖² + ‖R(H)‖² ≤ epsilon_scale · (value at the start)`.
    pub epsilon_scale: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub hals_sweeps: usize,
    pub nesterov_inner: usize,
    /// Present for the penalized driver only.
    pub penalty: Option<PenaltyConfig>,
    pub projector_storage: ProjectorStorage,
    pub activation: Activation,
    /// Optional wall-clock budget; runs cut short are reported unconverged.
    pub time_limit: Option<Duration>,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        Self {
            rank: 2,
            update: UpdateMethod::Hals,
            epsilon_scale: 1e-6,
            max_iters: 500,
            seed: 0,
            hals_sweeps: 1,
            nesterov_inner: 20,
            penalty: None,
            projector_storage: ProjectorStorage::Dense,
            activation: Activation::PerIteration,
            time_limit: None,
        }
    }
}

impl RecoveryOptions {
    pub fn validate(&self, periods: usize, series: usize) -> Result<()> {
        if self.rank < 1 || self.rank > periods.min(series) {
            return Err(Error::Parameter(format!(
                "rank must lie in [1, min(T, N)] = [1, {}], got {}",
                periods.min(series),
                self.rank
            )));
        }
        if !(self.epsilon_scale >= 0.0) {
            return Err(Error::Parameter(format!("epsilon scale must be >= 0, got {}", self.epsilon_scale)));
        }
        if self.hals_sweeps == 0 || self.nesterov_inner == 0 {
            return Err(Error::Parameter("inner iteration counts must be positive".into()));
        }
        Ok(())
    }
}

/// When the penalized projector replaces the plain one for a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    /// Only while the column of `WH` violates its autocorrelation constraint.
    #[default]
    PerIteration,
    /// At every iteration, for every column where the penalty applies.
    Always,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::PerIteration => "per-iteration",
            Activation::Always => "always",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-iteration" => Ok(Activation::PerIteration),
            "always" => Ok(Activation::Always),
            other => Err(Error::Config(format!(
                "unknown activation rule '{other}' (expected per-iteration or always)"
            ))),
        }
    }
}

/// Diagnostics of one recorded iterate (iteration 0 is the initial point).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    /// `‖V − WH‖²`
    pub objective: f64,
    /// `objective − λ Σ_n a_n v_n'Δ_{ρ_n}v_n` with `a_n` the activation used
    /// for column `n`; equals `objective` for unpenalized runs.
    pub penalized_objective: f64,
    /// `‖R(W)‖² + ‖R(H)‖²`
    pub kkt: f64,
    /// `max_d |A(V)_d − b_d|`
    pub constraint_violation: f64,
    pub min_entry: f64,
    /// Columns projected with the penalized projector at this iterate.
    pub active_columns: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Kkt,
    IterationCap,
    TimeLimit,
}

#[derive(Debug, Clone)]
pub struct RecoveryReport {
    pub v: SeriesMatrix,
    pub factors: FactorPair,
    pub trace: Vec<TraceRow>,
    /// Outer iterations performed.
    pub iterations: usize,
    pub stop_reason: StopReason,
    /// Absolute KKT threshold used for stopping.
    pub epsilon: f64,
    /// Penalty weight in force (0 for unpenalized runs).
    pub lambda: f64,
    pub elapsed: Duration,
    pub warnings: Vec<String>,
}

impl RecoveryReport {
    pub fn converged(&self) -> bool {
        self.stop_reason == StopReason::Kkt
    }

    /// Most negative entry of `V` over the whole run (0 if none).
    pub fn most_negative(&self) -> f64 {
        self.trace.iter().map(|r| r.min_entry).fold(0.0, f64::min)
    }
}

/// `‖V − V*‖_F / ‖V*‖_F`.
pub fn normalized_error(v: ArrayView2<f64>, truth: ArrayView2<f64>) -> Result<f64> {
    if v.dim() != truth.dim() {
        return Err(Error::Dimension(format!(
            "estimate is {}x{}, ground truth is {}x{}",
            v.nrows(),
            v.ncols(),
            truth.nrows(),
            truth.ncols()
        )));
    }
    let norm: f64 = truth.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Input("ground truth has zero Frobenius norm".into()));
    }
    let diff = Zip::from(&v).and(&truth).fold(0.0, |acc, a, b| acc + (a - b) * (a - b));
    Ok(diff.sqrt() / norm)
}

/// Unpenalized recovery: `V ← P_A(WH)` with the exact data projection.
pub fn recover(b: &ObservationVector, opts: &RecoveryOptions) -> Result<RecoveryReport> {
    let (periods, series) = b.shape();
    opts.validate(periods, series)?;
    run(b, opts, &mut SimplexStep)
}

/// Penalized recovery; `opts.penalty` must be set.
pub fn recover_penalized(b: &ObservationVector, opts: &RecoveryOptions) -> Result<RecoveryReport> {
    let penalty = checked_penalty(b, opts)?;
    let projectors = PenaltyProjectors::build(b, penalty, opts.projector_storage)?;
    recover_penalized_with(b, opts, &projectors)
}

/// Penalized recovery with projectors built beforehand, so runs that share
/// observations and thresholds (a rank sweep, say) build them once.
pub fn recover_penalized_with(
    b: &ObservationVector,
    opts: &RecoveryOptions,
    projectors: &PenaltyProjectors,
) -> Result<RecoveryReport> {
    let penalty = checked_penalty(b, opts)?;
    if projectors.columns.len() != b.shape().1 || projectors.lambda != penalty.lambda {
        return Err(Error::Config("projectors were built for different observations or penalty".into()));
    }
    run(b, opts, &mut PenalizedStep { projectors, activation: opts.activation })
}

fn checked_penalty<'a>(b: &ObservationVector, opts: &'a RecoveryOptions) -> Result<&'a PenaltyConfig> {
    let (periods, series) = b.shape();
    opts.validate(periods, series)?;
    let penalty = opts
        .penalty
        .as_ref()
        .ok_or_else(|| Error::Config("penalized recovery needs autocorrelation thresholds".into()))?;
    penalty.check_admissible(periods, series)?;
    Ok(penalty)
}

/// The `V` update of one outer iteration.
trait VStep {
    /// Returns the new `V`, the penalty term `Σ a_n v_n'Δv_n` (unscaled) and
    /// the number of penalized columns.
    fn step(&mut self, product: &Array2<f64>, b: &ObservationVector) -> Result<(Array2<f64>, f64, usize)>;

    fn lambda(&self) -> f64 {
        0.0
    }
}

struct SimplexStep;

impl VStep for SimplexStep {
    fn step(&mut self, product: &Array2<f64>, b: &ObservationVector) -> Result<(Array2<f64>, f64, usize)> {
        Ok((project_data(product.view(), b)?, 0.0, 0))
    }
}

struct ColumnPair {
    plain: ColumnProjector,
    penalized: Option<ColumnProjector>,
    rho: f64,
}

/// Per-column projectors for one set of observations and one penalty: the
/// Euclidean one (`λ = 0`) and, where the penalty applies, the `λ` one.
pub struct PenaltyProjectors {
    columns: Vec<ColumnPair>,
    lambda: f64,
}

impl PenaltyProjectors {
    pub fn build(b: &ObservationVector, penalty: &PenaltyConfig, storage: ProjectorStorage) -> Result<Self> {
        use rayon::prelude::*;
        let scheme = b.scheme();
        let (periods, series) = b.shape();
        penalty.check_admissible(periods, series)?;
        let columns = (0..series)
            .into_par_iter()
            .map(|n| {
                let targets: Vec<f64> = scheme.column_segments(n).iter().map(|&d| b.values()[d]).collect();
                let rho = penalty.rho[n];
                let plain = ColumnProjector::build(scheme, n, &targets, 0.0, rho, storage)?;
                let penalized = if penalty.lambda > 0.0 && penalty.applicable(n, periods) {
                    Some(ColumnProjector::build(scheme, n, &targets, penalty.lambda, rho, storage)?)
                } else {
                    None
                };
                Ok(ColumnPair { plain, penalized, rho })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { columns, lambda: penalty.lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Columns that have a penalized projector.
    pub fn penalized_columns(&self) -> usize {
        self.columns.iter().filter(|c| c.penalized.is_some()).count()
    }
}

struct PenalizedStep<'a> {
    projectors: &'a PenaltyProjectors,
    activation: Activation,
}

impl VStep for PenalizedStep<'_> {
    fn step(&mut self, product: &Array2<f64>, _b: &ObservationVector) -> Result<(Array2<f64>, f64, usize)> {
        let mut v = Array2::<f64>::zeros(product.dim());
        let mut penalty = 0.0;
        let mut active = 0;
        for (n, pair) in self.projectors.columns.iter().enumerate() {
            let x0 = product.column(n);
            let (projector, penalized) = match (&pair.penalized, self.activation) {
                (Some(p), Activation::Always) => (p, true),
                (Some(p), Activation::PerIteration) if autocorr_value(x0, pair.rho) < 0.0 => (p, true),
                _ => (&pair.plain, false),
            };
            let col = projector.project(x0);
            if penalized {
                active += 1;
                penalty += autocorr_value(col.view(), pair.rho);
            }
            v.column_mut(n).assign(&col);
        }
        Ok((v, penalty, active))
    }

    fn lambda(&self) -> f64 {
        self.projectors.lambda
    }
}

/// Entries uniform on `(0, 1]` times `sqrt(mean(b) / (K · mean segment length))`.
fn initial_factors(b: &ObservationVector, rank: usize, rng: &mut ChaCha8Rng) -> FactorPair {
    let (periods, series) = b.shape();
    let mean_b = b.values().mean().unwrap_or(0.0);
    let mean_len = b.scheme().mean_segment_length();
    let ratio = mean_b / (rank as f64 * mean_len);
    let scale = if ratio.is_finite() && ratio > 0.0 { ratio.sqrt() } else { 1.0 };
    let mut draw = |shape| Array2::from_shape_simple_fn(shape, || scale * (1.0 - rng.random::<f64>()));
    let w = draw((periods, rank));
    let h = draw((rank, series));
    FactorPair { w, h }
}

fn masked_norm(grad: &Array2<f64>, factor: ArrayView2<f64>) -> f64 {
    Zip::from(grad).and(factor).fold(0.0, |acc, &g, &f| if f != 0.0 { acc + g * g } else { acc })
}

/// Shared outer loop.
fn run(b: &ObservationVector, opts: &RecoveryOptions, vstep: &mut dyn VStep) -> Result<RecoveryReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut warnings = Vec::new();
    let lambda = vstep.lambda();

    let mut factors = initial_factors(b, opts.rank, &mut rng);
    let reseed_scale = factors.w.iter().chain(factors.h.iter()).sum::<f64>()
        / (factors.w.len() + factors.h.len()) as f64;
    let mut product = factors.product();
    let mut v = project_data(product.view(), b)?;
    let mut penalty_term = 0.0;
    let mut active = 0;

    let mut trace = Vec::with_capacity(opts.max_iters.min(10_000) + 1);
    // `cross_w = V Hᵀ` and `gram_h = H Hᵀ` serve both the KKT residual of the
    // current iterate and the next W update.
    let mut gram_h = factors.h.dot(&factors.h.t());
    let mut cross_w = v.dot(&factors.h.t());
    let mut gram_w = factors.w.t().dot(&factors.w);

    let record = |iteration: usize,
                  factors: &FactorPair,
                  v: &Array2<f64>,
                  product: &Array2<f64>,
                  gram_h: &Array2<f64>,
                  cross_w: &Array2<f64>,
                  gram_w: &Array2<f64>,
                  penalty_term: f64,
                  active: usize|
     -> Result<TraceRow> {
        let mut grad_w = factors.w.dot(gram_h);
        grad_w -= cross_w;
        let mut grad_h = gram_w.dot(&factors.h);
        grad_h -= &factors.w.t().dot(v);
        let kkt = masked_norm(&grad_w, factors.w.view()) + masked_norm(&grad_h, factors.h.view());
        let objective = Zip::from(v).and(product).fold(0.0, |acc, &a, &p| acc + (a - p) * (a - p));
        Ok(TraceRow {
            iteration,
            objective,
            penalized_objective: objective - lambda * penalty_term,
            kkt,
            constraint_violation: b.max_violation(v.view())?,
            min_entry: v.iter().copied().fold(f64::INFINITY, f64::min),
            active_columns: active,
        })
    };

    let first = record(0, &factors, &v, &product, &gram_h, &cross_w, &gram_w, penalty_term, active)?;
    let epsilon = opts.epsilon_scale * first.kkt;
    trace.push(first);

    let mut stop_reason = if first.kkt <= epsilon { StopReason::Kkt } else { StopReason::IterationCap };
    let mut iterations = 0;
    if stop_reason != StopReason::Kkt {
        for iteration in 1..=opts.max_iters {
            if let Some(limit) = opts.time_limit {
                if start.elapsed() >= limit {
                    stop_reason = StopReason::TimeLimit;
                    break;
                }
            }
            let out = update_factor(
                opts.update,
                factors.w.view_mut(),
                &cross_w,
                &gram_h,
                opts.hals_sweeps,
                opts.nesterov_inner,
            );
            if !out.degenerate.is_empty() {
                warnings.push(format!("iteration {iteration}: degenerate W components {:?}", out.degenerate));
            }
            if crate::nmf::reseed_zero_components(&mut factors, reseed_scale, &mut rng) > 0 {
                warnings.push(format!("iteration {iteration}: reseeded zero components after W update"));
            }

            gram_w = factors.w.t().dot(&factors.w);
            let cross_h = v.t().dot(&factors.w);
            let out = update_factor(
                opts.update,
                factors.h.view_mut().reversed_axes(),
                &cross_h,
                &gram_w,
                opts.hals_sweeps,
                opts.nesterov_inner,
            );
            if !out.degenerate.is_empty() {
                warnings.push(format!("iteration {iteration}: degenerate H components {:?}", out.degenerate));
            }
            if crate::nmf::reseed_zero_components(&mut factors, reseed_scale, &mut rng) > 0 {
                warnings.push(format!("iteration {iteration}: reseeded zero components after H update"));
                gram_w = factors.w.t().dot(&factors.w);
            }

            product = factors.product();
            (v, penalty_term, active) = vstep.step(&product, b)?;
            gram_h = factors.h.dot(&factors.h.t());
            cross_w = v.dot(&factors.h.t());

            let row = record(iteration, &factors, &v, &product, &gram_h, &cross_w, &gram_w, penalty_term, active)?;
            trace.push(row);
            iterations = iteration;
            if !row.kkt.is_finite() || !row.objective.is_finite() {
                return Err(Error::Numerical(format!("iterate became non-finite at iteration {iteration}")));
            }
            if row.kkt <= epsilon {
                stop_reason = StopReason::Kkt;
                break;
            }
        }
    }

    Ok(RecoveryReport {
        v,
        factors,
        trace,
        iterations,
        stop_reason,
        epsilon,
        lambda,
        elapsed: start.elapsed(),
        warnings,
    })
}
