//! Exact solution of `min ‖x − x0‖²  s.t. x'Δ_ρx ≥ 0`.
//!
//! The optimum is `(I − λΔ_ρ)⁻¹x0` for the multiplier `λ ∈ (0, 1/δ_{ρ,1})`
//! that zeroes `Σ_t δ_t z0_t² / (1 − λδ_t)²`, where `z0 = Ux0` in the sine
//! eigenbasis of `Δ_ρ`. Root finding per call is too slow for the recovery
//! loop; this solver serves as a reference for the penalized projector.

use ndarray::{Array1, Array2};

use super::{autocorr_value, check_rho, delta_rho_eigenvalues};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QcqpSolution {
    pub x: Array1<f64>,
    /// Multiplier of the quadratic constraint; 0 when `x0` is feasible.
    pub lambda: f64,
}

/// Orthonormal sine basis `U[k, t] = sqrt(2/(T+1)) sin((t+1)(k+1)π/(T+1))`.
/// Row `k` is the eigenvector of `δ_{ρ,k+1}`; `U` is symmetric and its own
/// inverse.
pub(crate) fn sine_basis(periods: usize) -> Array2<f64> {
    let scale = (2.0 / (periods + 1) as f64).sqrt();
    let step = std::f64::consts::PI / (periods + 1) as f64;
    Array2::from_shape_fn((periods, periods), |(k, t)| {
        scale * (((t + 1) * (k + 1)) as f64 * step).sin()
    })
}

pub fn qcqp_oracle(x0: &[f64], rho: f64) -> Result<QcqpSolution> {
    check_rho(rho)?;
    let periods = x0.len();
    if periods == 0 {
        return Err(Error::Parameter("empty vector".into()));
    }
    let x0 = Array1::from(x0.to_vec());
    if autocorr_value(x0.view(), rho) >= 0.0 {
        return Ok(QcqpSolution { x: x0, lambda: 0.0 });
    }
    let delta = delta_rho_eigenvalues(periods, rho);
    let top = delta[0];
    if !(top > 0.0) {
        return Err(Error::Parameter(format!(
            "no positive eigenvalue of the lag form (rho = {rho}, T = {periods}); only x = 0 is feasible"
        )));
    }

    let basis = sine_basis(periods);
    let mut z0 = basis.dot(&x0);
    let norm = z0.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in z0.iter_mut() {
        if v.abs() <= 1e-14 * norm {
            *v = 1e-12 * norm;
        }
    }

    // Parametrize by u = 1 − λδ₁ ∈ (0, 1] so the pole sits at u = 0 and the
    // root keeps full relative precision however close λ gets to 1/δ₁.
    // 1 − λδ_t = (δ₁ − δ_t + uδ_t)/δ₁, with δ₁ − δ_t from a product formula.
    let step = std::f64::consts::PI / (periods + 1) as f64;
    let gap: Vec<f64> = (1..=periods)
        .map(|t| 4.0 * ((t + 1) as f64 * step / 2.0).sin() * ((t - 1) as f64 * step / 2.0).sin())
        .collect();
    let scaling = |u: f64| -> Vec<f64> {
        delta.iter().zip(&gap).map(|(d, g)| (g + u * d) / top).collect()
    };
    let constraint = |u: f64| -> f64 {
        scaling(u)
            .iter()
            .zip(delta.iter().zip(z0.iter()))
            .map(|(mu, (d, z))| d * (z / mu).powi(2))
            .sum()
    };

    // constraint(u) is decreasing in u: +∞ at 0⁺, x0'Δx0 < 0 at 1.
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let at_hi = constraint(hi);
    if !(at_hi < 0.0) {
        return Err(Error::Numerical(format!(
            "expected a violated constraint at lambda = 0, got {at_hi}"
        )));
    }
    let mut found_positive = false;
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let value = constraint(mid);
        if !value.is_finite() {
            return Err(Error::Numerical(format!("constraint function not finite at u = {mid}")));
        }
        if value >= 0.0 {
            lo = mid;
            found_positive = true;
        } else {
            hi = mid;
        }
    }
    if !found_positive {
        return Err(Error::Numerical(format!(
            "no sign change of the multiplier equation in (0, 1/delta_1); bracket collapsed at u = {hi:e}, \
             z0_1 = {:e}",
            z0[0]
        )));
    }

    let mu = scaling(lo);
    let z: Array1<f64> = z0.iter().zip(&mu).map(|(z, m)| z / m).collect();
    let x = basis.t().dot(&z);
    Ok(QcqpSolution { x, lambda: (1.0 - lo) / top })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autocorr::{dense_delta_rho, solve_shifted};
    use ndarray::aview1;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sine_basis_diagonalizes() {
        for t in [2, 5, 9] {
            let u = sine_basis(t);
            let d = u.dot(&dense_delta_rho(t, 0.3)).dot(&u.t());
            let eig = delta_rho_eigenvalues(t, 0.3);
            for i in 0..t {
                for j in 0..t {
                    let expect = if i == j { eig[i] } else { 0.0 };
                    assert!((d[[i, j]] - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn feasible_input_is_returned() {
        let sol = qcqp_oracle(&[1.0, 1.0, 1.0], 0.2).unwrap();
        assert_eq!(sol.lambda, 0.0);
        assert_eq!(sol.x.to_vec(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn two_periods_opposite_signs() {
        let sol = qcqp_oracle(&[1.0, -1.0], 0.0).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-6, "{:?}", sol.x);
        assert!(sol.x[1].abs() < 1e-6);
        assert!(autocorr_value(sol.x.view(), 0.0).abs() <= 1e-6 * sol.x.dot(&sol.x));
    }

    #[test]
    fn matches_shifted_solve_and_binds() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut checked = 0;
        while checked < 30 {
            let t = rng.random_range(3..=10);
            let rho = rng.random_range(-0.9..0.9);
            let x0: Vec<f64> = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();
            if autocorr_value(aview1(&x0), rho) >= 0.0 || delta_rho_eigenvalues(t, rho)[0] <= 0.0 {
                continue;
            }
            let sol = qcqp_oracle(&x0, rho).unwrap();
            let top = delta_rho_eigenvalues(t, rho)[0];
            assert!(sol.lambda > 0.0 && sol.lambda < 1.0 / top);
            let norm2 = sol.x.dot(&sol.x);
            assert!(autocorr_value(sol.x.view(), rho).abs() <= 1e-6 * norm2);
            if sol.lambda * top < 0.999 {
                let direct = solve_shifted(sol.lambda, rho, aview1(&x0)).unwrap();
                let scale = direct.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                assert!((&direct - &sol.x).iter().all(|d| d.abs() < 1e-6 * scale));
            }
            checked += 1;
        }
    }

    #[test]
    fn rejects_all_negative_spectrum() {
        assert!(qcqp_oracle(&[1.0, -1.0, 1.0], 1.0).is_err());
    }
}
