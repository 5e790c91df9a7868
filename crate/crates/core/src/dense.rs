//! Small dense helpers that do not justify a LAPACK dependency.

use ndarray::{Array1, Array2, ArrayView1};

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub(crate) struct Cholesky {
    lower: Array2<f64>,
}

impl Cholesky {
    /// Returns `None` when a pivot is not strictly positive.
    pub(crate) fn new(a: &Array2<f64>) -> Option<Self> {
        let n = a.nrows();
        debug_assert_eq!(n, a.ncols());
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut diag = a[[j, j]];
            for k in 0..j {
                diag -= l[[j, k]] * l[[j, k]];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return None;
            }
            let ljj = diag.sqrt();
            l[[j, j]] = ljj;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / ljj;
            }
        }
        Some(Self { lower: l })
    }

    pub(crate) fn lower(&self) -> &Array2<f64> {
        &self.lower
    }

    /// Solves `A x = rhs`.
    pub(crate) fn solve(&self, rhs: ArrayView1<f64>) -> Array1<f64> {
        let l = &self.lower;
        let n = l.nrows();
        let mut y = rhs.to_owned();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[[i, k]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[[k, i]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        y
    }
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration, started from the all-ones vector.
pub(crate) fn largest_eigenvalue_psd(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = Array1::<f64>::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut estimate = 0.0;
    for _ in 0..500 {
        let w = a.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let rayleigh = v.dot(&w);
        v = w / norm;
        if (rayleigh - estimate).abs() <= 1e-14 * rayleigh.abs() {
            return rayleigh.max(norm);
        }
        estimate = rayleigh;
    }
    // ‖Av‖ for unit v is never above λ_max and converges to it from below
    // no slower than the Rayleigh quotient.
    let w = a.dot(&v);
    v.dot(&w).max(w.dot(&w).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cholesky_solves_spd_system() {
        let a = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let chol = Cholesky::new(&a).unwrap();
        let b = array![1.0, -2.0, 0.5];
        let x = chol.solve(b.view());
        let r = a.dot(&x) - &b;
        assert!(r.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(Cholesky::new(&a).is_none());
    }

    #[test]
    fn power_iteration_diagonal() {
        let a = array![[1.0, 0.0], [0.0, 3.0]];
        assert!((largest_eigenvalue_psd(&a) - 3.0).abs() < 1e-10);
        assert_eq!(largest_eigenvalue_psd(&Array2::zeros((2, 2))), 0.0);
    }
}
