//! Recovery of fine-grained nonnegative time series from per-series temporal
//! aggregates.
//!
//! A matrix `V*` (rows = periods, columns = individuals) is observed only
//! through sums over disjoint runs of consecutive periods within each column.
//! The estimate is a low-rank nonnegative factorization `WH` coupled with a
//! data-consistent matrix `V`, computed by block coordinate descent. An
//! optional lag-1 autocorrelation penalty pulls each recovered column towards
//! a target smoothness.
//!
//! Layout:
//! - [`measurement`]: aggregation schemes, the measurement operator, the
//!   interpolation baseline.
//! - [`projection`]: simplex projection and the exact projection onto the
//!   data-constraint set.
//! - [`nmf`]: HALS and accelerated projected-gradient factor updates, KKT
//!   residuals.
//! - [`autocorr`]: the lag quadratic form, shifted tridiagonal solves,
//!   closed-form penalized column projectors, and the exact QCQP solver used
//!   as a reference.
//! - [`recovery`]: the outer drivers and rank sweeps.
//! - [`datagen`]: synthetic Matérn-mixture ground truth and autocorrelation
//!   thresholds.
//! - [`harness`]: CSV formats, configuration and the experiment runner behind
//!   the `aggnmf` binary.

pub mod autocorr;
pub mod datagen;
mod dense;
pub mod error;
pub mod harness;
pub mod measurement;
pub mod nmf;
pub mod projection;
pub mod recovery;

pub use error::{Error, Result};

/// Dense `T × N` matrix of time series: rows are periods, columns are
/// individuals.
pub type SeriesMatrix = ndarray::Array2<f64>;

/// Deterministic child seed from a base seed and a list of coordinates.
///
/// SplitMix64 finalizer folded over the parts, so seeds for different sweep
/// cells are decorrelated but reproducible.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts
        .iter()
        .fold(mix(base), |acc, &p| mix(acc ^ mix(p.wrapping_add(0x632B_E59B_D9B4_E019))))
}
