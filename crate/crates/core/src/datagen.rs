//! Synthetic ground truth: nonnegative mixtures of Matérn Gaussian-process
//! paths, plus lag-1 autocorrelation thresholds estimated from held-out
//! history.

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dense::Cholesky;
use crate::error::{Error, Result};
use crate::SeriesMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub periods: usize,
    pub series: usize,
    /// Number of latent GP paths `K*`.
    pub rank: usize,
    /// Matérn smoothness; must be a half-integer (0.5, 1.5, 2.5, ...).
    pub nu: f64,
    /// Length-scale in periods.
    pub length_scale: f64,
    pub variance: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { periods: 150, series: 120, rank: 20, nu: 2.5, length_scale: 10.0, variance: 1.0, seed: 0 }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.periods == 0 || self.series == 0 || self.rank == 0 {
            return Err(Error::Config(format!(
                "synthetic dimensions must be positive (periods={}, series={}, rank={})",
                self.periods, self.series, self.rank
            )));
        }
        if !(self.length_scale > 0.0) || !(self.variance > 0.0) {
            return Err(Error::Config("length_scale and variance must be positive".into()));
        }
        half_integer_order(self.nu)?;
        Ok(())
    }
}

/// `p` such that `ν = p + 1/2`.
fn half_integer_order(nu: f64) -> Result<usize> {
    let p = nu - 0.5;
    if !(nu > 0.0) || p.fract() != 0.0 || p > 20.0 {
        return Err(Error::Config(format!(
            "Matérn smoothness must be a half-integer in [0.5, 20.5], got {nu}"
        )));
    }
    Ok(p as usize)
}

/// Matérn covariance at distance `r` for half-integer `ν = p + 1/2`:
/// `σ² exp(−√(2ν)r/ℓ) · p!/(2p)! · Σ_i (p+i)!/(i!(p−i)!) (2√(2ν)r/ℓ)^{p−i}`.
pub fn matern_covariance(r: f64, nu: f64, length_scale: f64, variance: f64) -> Result<f64> {
    let p = half_integer_order(nu)?;
    let scaled = (2.0 * nu).sqrt() * r.abs() / length_scale;
    let factorial = |n: usize| (1..=n).fold(1.0, |acc, k| acc * k as f64);
    let poly: f64 = (0..=p)
        .map(|i| factorial(p + i) / (factorial(i) * factorial(p - i)) * (2.0 * scaled).powi((p - i) as i32))
        .sum();
    Ok(variance * (-scaled).exp() * factorial(p) / factorial(2 * p) * poly)
}

pub fn matern_kernel_matrix(periods: usize, nu: f64, length_scale: f64, variance: f64) -> Result<Array2<f64>> {
    let row: Vec<f64> = (0..periods)
        .map(|lag| matern_covariance(lag as f64, nu, length_scale, variance))
        .collect::<Result<_>>()?;
    Ok(Array2::from_shape_fn((periods, periods), |(i, j)| row[i.abs_diff(j)]))
}

/// Cholesky with diagonal jitter `1e-10·σ²`, escalated ×10 up to three times.
fn jittered_cholesky(kernel: &Array2<f64>, variance: f64) -> Result<Cholesky> {
    let mut jitter = 1e-10 * variance;
    for _ in 0..4 {
        let mut k = kernel.clone();
        k.diag_mut().mapv_inplace(|v| v + jitter);
        if let Some(chol) = Cholesky::new(&k) {
            return Ok(chol);
        }
        jitter *= 10.0;
    }
    Err(Error::Numerical(format!(
        "Matérn kernel Cholesky failed with jitter up to {:e}",
        jitter / 10.0
    )))
}

/// Ground truth `V* = W H` and its factors.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub truth: SeriesMatrix,
    pub w: Array2<f64>,
    pub h: Array2<f64>,
}

/// Ground truth preceded by `periods` rows of history from the same paths.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWithHistory {
    pub history: SeriesMatrix,
    pub data: SyntheticData,
}

/// Draws `spec.rank` GP paths of length `len`, each shifted by its minimum.
fn shifted_paths(spec: &SyntheticSpec, len: usize, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
    let kernel = matern_kernel_matrix(len, spec.nu, spec.length_scale, spec.variance)?;
    let chol = jittered_cholesky(&kernel, spec.variance)?;
    let mut w = Array2::<f64>::zeros((len, spec.rank));
    for k in 0..spec.rank {
        let z: Array1<f64> = (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let path = chol.lower().dot(&z);
        let min = path.iter().copied().fold(f64::INFINITY, f64::min);
        w.column_mut(k).assign(&path.mapv(|v| v - min));
    }
    Ok(w)
}

fn mixture_weights(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((spec.rank, spec.series), |_| rng.random::<f64>())
}

/// `spec.series` random mixtures of `spec.rank` Matérn paths over
/// `spec.periods` periods; weights i.i.d. uniform(0, 1).
pub fn matern_mixture(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let w = shifted_paths(spec, spec.periods, &mut rng)?;
    let h = mixture_weights(spec, &mut rng);
    Ok(SyntheticData { truth: w.dot(&h), w, h })
}

/// Paths of length `2T`: the first `T` rows form the history used for
/// autocorrelation thresholds, the last `T` rows the recovery target.
pub fn matern_mixture_with_history(spec: &SyntheticSpec) -> Result<SyntheticWithHistory> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let t = spec.periods;
    let paths = shifted_paths(spec, 2 * t, &mut rng)?;
    let h = mixture_weights(spec, &mut rng);
    let history = paths.slice(s![..t, ..]).dot(&h);
    let w = paths.slice(s![t.., ..]).to_owned();
    Ok(SyntheticWithHistory { history, data: SyntheticData { truth: w.dot(&h), w, h } })
}

/// Per-column lag-1 ratio `Σ x_{t+1}x_t / Σ x_t²`, clamped to `[−1, 1]`.
/// Zero-energy columns get 0 and a warning.
pub fn estimate_rho(history: ArrayView2<f64>) -> Result<Vec<f64>> {
    if history.nrows() < 2 {
        return Err(Error::Input(format!(
            "autocorrelation needs at least 2 periods of history, got {}",
            history.nrows()
        )));
    }
    Ok(history
        .columns()
        .into_iter()
        .enumerate()
        .map(|(n, col)| {
            let energy: f64 = col.iter().map(|v| v * v).sum();
            if energy == 0.0 {
                log::warn!("history column {} has zero energy; using rho = 0", n + 1);
                return 0.0;
            }
            let lagged: f64 = col.iter().zip(col.iter().skip(1)).map(|(a, b)| a * b).sum();
            (lagged / energy).clamp(-1.0, 1.0)
        })
        .collect())
}
