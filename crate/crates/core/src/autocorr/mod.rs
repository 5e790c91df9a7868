//! Lag-1 autocorrelation penalty.
//!
//! The constraint `Σ_t x_{t+1} x_t ≥ ρ Σ_t x_t²` is the quadratic form
//! `x'Δ_ρx ≥ 0` with `Δ_ρ = Δ + Δ' − 2ρI`, a symmetric tridiagonal Toeplitz
//! matrix (off-diagonals 1, diagonal −2ρ) whose spectrum and eigenvectors are
//! known in closed form.

mod projector;
mod qcqp;
mod tridiag;

pub use projector::{penalized_project_column, ColumnProjector, ProjectorStorage};
pub use qcqp::{qcqp_oracle, QcqpSolution};
pub use tridiag::{solve_shifted, ShiftedLagSystem};

use ndarray::ArrayView1;

use crate::error::{Error, Result};

/// `Δ_ρ` for a series of length `periods`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagQuadraticForm {
    pub periods: usize,
    pub rho: f64,
}

impl LagQuadraticForm {
    pub fn new(periods: usize, rho: f64) -> Result<Self> {
        check_rho(rho)?;
        if periods == 0 {
            return Err(Error::Parameter("series length must be positive".into()));
        }
        Ok(Self { periods, rho })
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        delta_rho_eigenvalues(self.periods, self.rho)
    }

    pub fn largest_eigenvalue(&self) -> f64 {
        largest_delta(self.periods, self.rho)
    }

    pub fn value(&self, x: ArrayView1<f64>) -> f64 {
        autocorr_value(x, self.rho)
    }
}

pub(crate) fn check_rho(rho: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::Parameter(format!("autocorrelation threshold must lie in [-1, 1], got {rho}")));
    }
    Ok(())
}

/// Eigenvalues `2cos(tπ/(T+1)) − 2ρ`, `t = 1..T`, in decreasing order.
pub fn delta_rho_eigenvalues(periods: usize, rho: f64) -> Vec<f64> {
    let step = std::f64::consts::PI / (periods + 1) as f64;
    (1..=periods).map(|t| 2.0 * (t as f64 * step).cos() - 2.0 * rho).collect()
}

/// `δ_{ρ,1} = 2cos(π/(T+1)) − 2ρ`.
pub fn largest_delta(periods: usize, rho: f64) -> f64 {
    2.0 * (std::f64::consts::PI / (periods + 1) as f64).cos() - 2.0 * rho
}

/// `x'Δ_ρx = 2Σ x_{t+1}x_t − 2ρ‖x‖²`; the constraint holds iff this is ≥ 0.
pub fn autocorr_value(x: ArrayView1<f64>, rho: f64) -> f64 {
    let lagged: f64 = x.iter().zip(x.iter().skip(1)).map(|(a, b)| a * b).sum();
    let energy: f64 = x.iter().map(|v| v * v).sum();
    2.0 * lagged - 2.0 * rho * energy
}

/// `λ = min(1, 1/(2 max_n δ_{ρ_n,1}))` over the columns where the penalty can
/// apply (`δ_{ρ_n,1} > 0`).
pub fn lambda_heuristic(rho: &[f64], periods: usize) -> Result<f64> {
    for &r in rho {
        check_rho(r)?;
    }
    let max_delta = rho
        .iter()
        .map(|&r| largest_delta(periods, r))
        .filter(|d| *d > 0.0)
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.max(d))));
    match max_delta {
        Some(d) => Ok(lambda_from_max_delta(d)),
        None => Err(Error::Parameter(
            "no column admits the autocorrelation penalty (every threshold is at or above \
             cos(pi/(T+1))); use lambda = 0 for an unpenalized run"
                .into(),
        )),
    }
}

fn lambda_from_max_delta(max_delta: f64) -> f64 {
    (1.0 / (2.0 * max_delta)).min(1.0)
}

/// Per-column thresholds and the global regularization weight.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyConfig {
    pub rho: Vec<f64>,
    pub lambda: f64,
}

impl PenaltyConfig {
    pub fn new(rho: Vec<f64>, lambda: f64) -> Result<Self> {
        for &r in &rho {
            check_rho(r)?;
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Parameter(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(Self { rho, lambda })
    }

    /// Thresholds with `λ` from [`lambda_heuristic`].
    pub fn with_heuristic_lambda(rho: Vec<f64>, periods: usize) -> Result<Self> {
        let lambda = lambda_heuristic(&rho, periods)?;
        Self::new(rho, lambda)
    }

    /// Whether column `n` can carry the penalty (`δ_{ρ_n,1} > 0`).
    pub fn applicable(&self, column: usize, periods: usize) -> bool {
        largest_delta(periods, self.rho[column]) > 0.0
    }

    /// Checks `λ < 1/δ_{ρ_n,1}` for every applicable column.
    pub fn check_admissible(&self, periods: usize, series: usize) -> Result<()> {
        if self.rho.len() != series {
            return Err(Error::Dimension(format!(
                "{} autocorrelation thresholds for {} series",
                self.rho.len(),
                series
            )));
        }
        for (n, &r) in self.rho.iter().enumerate() {
            let delta = largest_delta(periods, r);
            if delta > 0.0 && self.lambda * delta >= 1.0 {
                return Err(Error::Parameter(format!(
                    "lambda = {} is not below 1/delta_1 = {} for column {}",
                    self.lambda,
                    1.0 / delta,
                    n + 1
                )));
            }
        }
        Ok(())
    }
}

/// Dense `Δ_ρ`, for tests and diagnostics.
pub fn dense_delta_rho(periods: usize, rho: f64) -> ndarray::Array2<f64> {
    let mut m = ndarray::Array2::<f64>::zeros((periods, periods));
    for t in 0..periods {
        m[[t, t]] = -2.0 * rho;
        if t + 1 < periods {
            m[[t, t + 1]] = 1.0;
            m[[t + 1, t]] = 1.0;
        }
    }
    m
}
