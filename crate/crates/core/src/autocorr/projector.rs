//! Closed-form minimizer of `‖x − x0‖² − λx'Δ_ρx` subject to `A_n x = c_n`.
//!
//! With `K = (I − λΔ_ρ)⁻¹`, `S = K A_nᵀ` and `G = A_n S`, the minimizer is
//! `Q c + (I − Q A_n) K x0` where `Q = S G⁻¹`. Everything except `x0` is
//! fixed per column, so the affine map is built once and reused at every
//! outer iteration.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use super::tridiag::ShiftedLagSystem;
use crate::dense::Cholesky;
use crate::error::{Error, Result};
use crate::measurement::AggregationScheme;

/// How the linear part `M = (I − QA_n)K` is kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectorStorage {
    /// `M` materialized as a `T × T` matrix; one mat-vec per projection.
    #[default]
    Dense,
    /// Only `Q` is kept; `Mx0 = y − Q(A_n y)` with `y = Kx0` from a
    /// tridiagonal solve.
    Lean,
}

/// Precomputed affine map for one column.
#[derive(Debug, Clone)]
pub struct ColumnProjector {
    column: usize,
    /// Segments of this column as row ranges.
    ranges: Vec<std::ops::Range<usize>>,
    targets: Vec<f64>,
    qc: Array1<f64>,
    /// `Q`, `T × d`.
    q: Array2<f64>,
    linear: Option<Array2<f64>>,
    system: ShiftedLagSystem,
}

impl ColumnProjector {
    /// Builds the projector for `column` of `scheme` with aggregates
    /// `targets` (one per segment of that column, in start-row order).
    pub fn build(
        scheme: &AggregationScheme,
        column: usize,
        targets: &[f64],
        lambda: f64,
        rho: f64,
        storage: ProjectorStorage,
    ) -> Result<Self> {
        let periods = scheme.periods();
        let ranges: Vec<_> = scheme
            .column_segments(column)
            .iter()
            .map(|&d| scheme.segments()[d].rows())
            .collect();
        if ranges.len() != targets.len() {
            return Err(Error::Dimension(format!(
                "column {} has {} segments but {} aggregates",
                column + 1,
                ranges.len(),
                targets.len()
            )));
        }
        let system = ShiftedLagSystem::new(periods, lambda, rho)?;
        let dims = ranges.len();

        // S = K A_nᵀ, one tridiagonal solve per segment indicator.
        let mut s = Array2::<f64>::zeros((periods, dims));
        let mut buf = vec![0.0; periods];
        for (j, r) in ranges.iter().enumerate() {
            buf.iter_mut().for_each(|v| *v = 0.0);
            buf[r.clone()].iter_mut().for_each(|v| *v = 1.0);
            system.solve_in_place(&mut buf);
            s.column_mut(j).assign(&ArrayView1::from(&buf[..]));
        }

        let mut q = Array2::<f64>::zeros((periods, dims));
        let mut qc = Array1::<f64>::zeros(periods);
        if dims > 0 {
            let gram = segment_sums(&s, &ranges);
            let chol = Cholesky::new(&gram).ok_or_else(|| {
                Error::Numerical(format!(
                    "measurement Gram matrix of column {} is singular; segments must be disjoint",
                    column + 1
                ))
            })?;
            for (t, row) in s.axis_iter(Axis(0)).enumerate() {
                q.row_mut(t).assign(&chol.solve(row));
            }
            qc = q.dot(&ArrayView1::from(targets));
        }

        let linear = match storage {
            ProjectorStorage::Lean => None,
            ProjectorStorage::Dense => {
                let mut k = Array2::<f64>::zeros((periods, periods));
                for t in 0..periods {
                    buf.iter_mut().for_each(|v| *v = 0.0);
                    buf[t] = 1.0;
                    system.solve_in_place(&mut buf);
                    k.column_mut(t).assign(&ArrayView1::from(&buf[..]));
                }
                if dims > 0 {
                    k -= &q.dot(&s.t());
                }
                Some(k)
            }
        };

        Ok(Self { column, ranges, targets: targets.to_vec(), qc, q, linear, system })
    }

    pub fn column(&self) -> usize {
        self.column
    }

    /// Number of aggregates on this column (`d_n`).
    pub fn active_dims(&self) -> usize {
        self.ranges.len()
    }

    pub fn lambda(&self) -> f64 {
        self.system.lambda()
    }

    pub fn rho(&self) -> f64 {
        self.system.rho()
    }

    /// `Q c`.
    pub fn qc(&self) -> &Array1<f64> {
        &self.qc
    }

    /// Dense `M`, when stored.
    pub fn linear_part(&self) -> Option<&Array2<f64>> {
        self.linear.as_ref()
    }

    /// `Qc + M x0`, followed by a Euclidean correction of the rounding-level
    /// residual of `A_n x = c_n`.
    pub fn project(&self, x0: ArrayView1<f64>) -> Array1<f64> {
        let mut x = match &self.linear {
            Some(m) => m.dot(&x0),
            None => {
                let y = self.system.solve(x0);
                let ay: Array1<f64> = self.ranges.iter().map(|r| y.slice(ndarray::s![r.clone()]).sum()).collect();
                if ay.is_empty() {
                    y
                } else {
                    y - self.q.dot(&ay)
                }
            }
        };
        x += &self.qc;
        for (r, &c) in self.ranges.iter().zip(&self.targets) {
            let mut seg = x.slice_mut(ndarray::s![r.clone()]);
            let shift = (c - seg.sum()) / r.len() as f64;
            seg.mapv_inplace(|v| v + shift);
        }
        x
    }
}

/// Exact minimizer for one column; see [`ColumnProjector::project`].
pub fn penalized_project_column(projector: &ColumnProjector, x0: ArrayView1<f64>) -> Array1<f64> {
    projector.project(x0)
}

/// `A_n S`: row `i` sums the rows of `s` covered by segment `i`.
fn segment_sums(s: &Array2<f64>, ranges: &[std::ops::Range<usize>]) -> Array2<f64> {
    let d = ranges.len();
    let mut g = Array2::<f64>::zeros((d, s.ncols()));
    for (i, r) in ranges.iter().enumerate() {
        g.row_mut(i).assign(&s.slice(ndarray::s![r.clone(), ..]).sum_axis(Axis(0)));
    }
    // Symmetrize away rounding so the Cholesky sees an exactly symmetric matrix.
    let gt = g.t().to_owned();
    (g + gt) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autocorr::{autocorr_value, dense_delta_rho, largest_delta};
    use crate::measurement::Segment;
    use ndarray::arr1;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_column(periods: usize, segs: &[(usize, usize)]) -> AggregationScheme {
        let segs = segs.iter().map(|&(start, length)| Segment { column: 0, start, length }).collect();
        AggregationScheme::new(periods, 1, segs).unwrap()
    }

    #[test]
    fn euclidean_case_on_two_periods() {
        let scheme = single_column(2, &[(0, 2)]);
        for storage in [ProjectorStorage::Dense, ProjectorStorage::Lean] {
            let p = ColumnProjector::build(&scheme, 0, &[4.0], 0.0, 0.0, storage).unwrap();
            assert_eq!(p.project(arr1(&[1.0, 1.0]).view()), arr1(&[2.0, 2.0]));
            assert_eq!(p.project(arr1(&[3.0, 1.0]).view()), arr1(&[3.0, 1.0]));
        }
    }

    #[test]
    fn unobserved_column_without_penalty_is_identity() {
        let scheme = single_column(4, &[]);
        let p = ColumnProjector::build(&scheme, 0, &[], 0.0, 0.3, ProjectorStorage::Dense).unwrap();
        assert_eq!(p.linear_part().unwrap(), &Array2::<f64>::eye(4));
        assert_eq!(p.qc(), &Array1::<f64>::zeros(4));
        let x0 = arr1(&[1.0, -2.0, 0.5, 3.0]);
        assert_eq!(p.project(x0.view()), x0);
    }

    #[test]
    fn zero_lambda_q_uses_segment_lengths() {
        let scheme = single_column(6, &[(0, 2), (2, 3)]);
        let p = ColumnProjector::build(&scheme, 0, &[4.0, 9.0], 0.0, 0.0, ProjectorStorage::Dense).unwrap();
        let expect = arr1(&[2.0, 2.0, 3.0, 3.0, 3.0, 0.0]);
        assert!((p.qc() - &expect).iter().all(|d| d.abs() < 1e-14), "{}", p.qc());
    }

    #[test]
    fn feasible_for_any_x0() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let scheme = single_column(10, &[(0, 3), (5, 4)]);
        let rho = 0.2;
        let lambda = 0.9 / largest_delta(10, rho);
        let c = [2.0, -1.0];
        for storage in [ProjectorStorage::Dense, ProjectorStorage::Lean] {
            let p = ColumnProjector::build(&scheme, 0, &c, lambda, rho, storage).unwrap();
            for _ in 0..100 {
                let x0 = Array1::from_shape_fn(10, |_| rng.random_range(-3.0..3.0));
                let x = p.project(x0.view());
                assert!((x.slice(ndarray::s![0..3]).sum() - 2.0).abs() < 1e-10);
                assert!((x.slice(ndarray::s![5..9]).sum() + 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn dense_and_lean_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let scheme = single_column(12, &[(1, 4), (6, 2), (8, 3)]);
        let rho = -0.3;
        let lambda = 0.5 / largest_delta(12, rho);
        let c = [1.0, 0.5, 2.0];
        let dense = ColumnProjector::build(&scheme, 0, &c, lambda, rho, ProjectorStorage::Dense).unwrap();
        let lean = ColumnProjector::build(&scheme, 0, &c, lambda, rho, ProjectorStorage::Lean).unwrap();
        for _ in 0..20 {
            let x0 = Array1::from_shape_fn(12, |_| rng.random_range(-1.0..1.0));
            let a = dense.project(x0.view());
            let b = lean.project(x0.view());
            assert!((&a - &b).iter().all(|d| d.abs() < 1e-12));
        }
    }

    #[test]
    fn penalty_raises_autocorrelation_of_spike() {
        let scheme = single_column(8, &[(0, 4), (4, 4)]);
        let rho = 0.5;
        let lambda = 0.5 / largest_delta(8, rho);
        let mut x0 = Array1::zeros(8);
        x0[2] = 4.0;
        x0[6] = 4.0;
        let plain = ColumnProjector::build(&scheme, 0, &[4.0, 4.0], 0.0, rho, ProjectorStorage::Dense).unwrap();
        let pen = ColumnProjector::build(&scheme, 0, &[4.0, 4.0], lambda, rho, ProjectorStorage::Dense).unwrap();
        let a = autocorr_value(plain.project(x0.view()).view(), rho);
        let b = autocorr_value(pen.project(x0.view()).view(), rho);
        assert!(b > a, "penalized {b} vs plain {a}");
    }

    #[test]
    fn minimizes_penalized_objective_over_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let scheme = single_column(9, &[(0, 3), (4, 2)]);
            let rho = rng.random_range(-0.8..0.8);
            let lambda = 0.9 / largest_delta(9, rho);
            let c = [rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)];
            let p = ColumnProjector::build(&scheme, 0, &c, lambda, rho, ProjectorStorage::Dense).unwrap();
            let x0 = Array1::from_shape_fn(9, |_| rng.random_range(-2.0..2.0));
            let delta = dense_delta_rho(9, rho);
            let f = |x: &Array1<f64>| (x - &x0).mapv(|v| v * v).sum() - lambda * x.dot(&delta.dot(x));
            let best = f(&p.project(x0.view()));
            let euclid = ColumnProjector::build(&scheme, 0, &c, 0.0, rho, ProjectorStorage::Dense).unwrap();
            for _ in 0..1000 {
                let z = Array1::from_shape_fn(9, |_| rng.random_range(-4.0..4.0));
                let feasible = euclid.project(z.view());
                assert!(best <= f(&feasible) + 1e-9);
            }
        }
    }
}
