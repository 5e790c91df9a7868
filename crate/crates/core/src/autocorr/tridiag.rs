//! `(I − λΔ_ρ)x = rhs` in `O(T)`.
//!
//! The matrix has diagonal `1 + 2λρ` and off-diagonals `−λ`. It is positive
//! definite whenever `λδ_{ρ,1} < 1`, so an `LDLᵀ` sweep without pivoting is
//! stable.

use ndarray::{Array1, ArrayView1};

use super::{check_rho, largest_delta};
use crate::error::{Error, Result};

/// Factorized `I − λΔ_ρ` for one series length.
#[derive(Debug, Clone)]
pub struct ShiftedLagSystem {
    lambda: f64,
    rho: f64,
    /// Pivots `d_t` of the `LDLᵀ` factorization.
    pivots: Vec<f64>,
    /// Sub-diagonal multipliers `l_t = −λ / d_t`.
    multipliers: Vec<f64>,
}

impl ShiftedLagSystem {
    pub fn new(periods: usize, lambda: f64, rho: f64) -> Result<Self> {
        check_rho(rho)?;
        if periods == 0 {
            return Err(Error::Parameter("series length must be positive".into()));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Parameter(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        let delta = largest_delta(periods, rho);
        if delta > 0.0 && lambda * delta >= 1.0 {
            return Err(Error::Parameter(format!(
                "lambda = {lambda} must stay below 1/delta_1 = {} (T = {periods}, rho = {rho})",
                1.0 / delta
            )));
        }
        let diag = 1.0 + 2.0 * lambda * rho;
        let off = -lambda;
        let mut pivots = Vec::with_capacity(periods);
        let mut multipliers = Vec::with_capacity(periods.saturating_sub(1));
        pivots.push(diag);
        for t in 1..periods {
            let l = off / pivots[t - 1];
            multipliers.push(l);
            pivots.push(diag - l * off);
        }
        if let Some(p) = pivots.iter().find(|p| !(**p > 0.0)) {
            return Err(Error::Numerical(format!("shifted lag matrix lost definiteness (pivot {p})")));
        }
        Ok(Self { lambda, rho, pivots, multipliers })
    }

    pub fn periods(&self) -> usize {
        self.pivots.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn solve(&self, rhs: ArrayView1<f64>) -> Array1<f64> {
        let mut x = rhs.to_owned();
        self.solve_in_place(x.as_slice_mut().expect("owned array is contiguous"));
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.pivots.len();
        debug_assert_eq!(x.len(), n);
        for t in 1..n {
            x[t] -= self.multipliers[t - 1] * x[t - 1];
        }
        for t in 0..n {
            x[t] /= self.pivots[t];
        }
        for t in (0..n.saturating_sub(1)).rev() {
            x[t] -= self.multipliers[t] * x[t + 1];
        }
    }

    /// `(I − λΔ_ρ)x`.
    pub fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let n = x.len();
        let diag = 1.0 + 2.0 * self.lambda * self.rho;
        Array1::from_shape_fn(n, |t| {
            let mut v = diag * x[t];
            if t > 0 {
                v -= self.lambda * x[t - 1];
            }
            if t + 1 < n {
                v -= self.lambda * x[t + 1];
            }
            v
        })
    }
}

/// One-shot solve of `(I − λΔ_ρ)x = rhs`.
pub fn solve_shifted(lambda: f64, rho: f64, rhs: ArrayView1<f64>) -> Result<Array1<f64>> {
    Ok(ShiftedLagSystem::new(rhs.len(), lambda, rho)?.solve(rhs))
}
